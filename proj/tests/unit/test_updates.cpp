#include <doctest.h>

#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "helpers.hpp"
#include "tvem/stats.hpp"
#include "tvem/updates.hpp"

using namespace tvem;

namespace {

struct Fixture {
  Dataset data;
  SplineReparam rp;
  Fixture(int n, int per, int p, int d, std::uint64_t seed)
      : data(testutil::small_dataset(n, per, p, d, seed)), rp(build_reparam(testutil::to_std(data.u), SplineConfig{})) {}
};

}  // namespace

TEST_CASE("pseudo-likelihood completes the square of the augmented likelihood") {
  Fixture f(6, 6, 3, 2, 1);
  const Model model(f.data, f.rp, Hyperparams{});
  RngStream rng(2);
  ParamState s = init_state(model, rng);
  update_omega(model, s, rng);
  const int t = term_index(1, TermKind::Main);
  const GaussianPseudoLik pl = pseudo_lik_for_coef(model, s, {CoefficientFamily::Fixed, t});
  // log p(y, omega | c) up to a constant: sum k psi - omega psi^2 / 2
  auto logq = [&](double c) {
    ParamState x = s;
    x.beta(t) = c;
    const Eigen::VectorXd psi = compute_psi(model, x);
    return (model.kappa_obs.array() * psi.array() - 0.5 * s.omega.array() * psi.array().square()).sum();
  };
  const double q0 = logq(0.0), q1 = logq(1.0), q2 = logq(-0.5);
  CHECK(q1 - q0 == doctest::Approx(-0.5 * pl.a + pl.b).epsilon(1e-9));
  CHECK(q2 - q0 == doctest::Approx(-0.125 * pl.a - 0.5 * pl.b).epsilon(1e-9));
}

TEST_CASE("scalar helpers") {
  CHECK(inclusion_prior_odds(1, 1, 3, 5) == doctest::Approx(4.0 / 6.0));
  CHECK(mu_plus_probability(0.0) == doctest::Approx(0.5));
  CHECK(mu_plus_probability(1.0) == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + std::exp(-1.0))));
  RngStream rng(3);
  double s = 0;
  for (int i = 0; i < 20000; ++i) s += update_concentration(1.0, 0, 0, 2.0, 4.0, rng);
  CHECK(s / 20000 == doctest::Approx(0.5).epsilon(0.03));
}

TEST_CASE("sweeps keep the psi cache and zeroing invariants") {
  Fixture f(10, 8, 4, 3, 4);
  for (bool dp : {false, true}) {
    Hyperparams hp;
    hp.dp_fixed = hp.dp_random = dp;
    const Model model(f.data, f.rp, hp);
    RngStream rng(5);
    ParamState s = init_state(model, rng);
    for (int it = 0; it < 150; ++it) {
      gibbs_sweep(model, s, rng);
      const auto bad = check_invariants(model, s);
      CHECK_MESSAGE(!bad.has_value(), bad.value_or(""));
      const Eigen::VectorXd fresh = compute_psi(model, s);
      REQUIRE((fresh - s.psi).cwiseAbs().maxCoeff() < 1e-8 * (1.0 + fresh.cwiseAbs().maxCoeff()));
      for (int p = 0; p < model.layout.n_fixed; ++p)
        CHECK(s.xi.col(p).cwiseAbs().mean() == doctest::Approx(1.0).epsilon(1e-12));
    }
    const ClusterCounts c = beta_cluster_counts(model, s);
    CHECK(c.n_clusters <= c.n_items);
  }
}

TEST_CASE("gamma entries are free when both effects are included") {
  ParamState s;
  s.lambda = {1, 0, 1};
  CHECK_FALSE(gamma_entry_free(s, 1, 0));
  CHECK(gamma_entry_free(s, 2, 0));
  CHECK_FALSE(gamma_entry_free(s, 2, 1));
}

TEST_CASE("single included coefficient: within step targets the exact conditional") {
  // 1 covariate with only its main term; omega held fixed, so beta | omega is Gaussian
  Fixture f(6, 8, 1, 0, 6);
  Hyperparams hp;
  hp.fixed_modes = {TermMode::Absent, TermMode::Absent, TermMode::Forced};
  const Model model(f.data, f.rp, hp);
  RngStream rng(7);
  ParamState s = init_state(model, rng);
  update_omega(model, s, rng);
  const double a = s.omega.sum();
  const double b = model.kappa_obs.sum();
  const double post_var = 1.0 / (a + 1.0 / hp.tau2);
  double m = 0, ss = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    update_beta_nu(model, s, rng);
    m += s.beta(2);
    ss += s.beta(2) * s.beta(2);
  }
  m /= n;
  CHECK(m == doctest::Approx(b * post_var).epsilon(0.03));
  CHECK(ss / n - m * m == doctest::Approx(post_var).epsilon(0.05));
}

TEST_CASE("random intercept selection matches nested quadrature") {
  // fixed part pinned at zero; one selectable random intercept
  const std::vector<int> ones{1, 2, 3, 5, 6, 7};
  const int n = 8;
  std::vector<SubjectSeries> subjects;
  for (std::size_t i = 0; i < ones.size(); ++i) {
    SubjectSeries s;
    s.id = "s" + std::to_string(i);
    s.x = Eigen::MatrixXd::Ones(n + 1, 1);
    s.z = Eigen::MatrixXd::Ones(n + 1, 1);
    s.outcome.push_back(0);
    for (int j = 0; j < n; ++j) s.outcome.push_back(j < ones[i] ? 1 : 0);
    for (int j = 0; j <= n; ++j) s.u.push_back(j / static_cast<double>(n));
    subjects.push_back(s);
  }
  const Dataset data = make_lagged_dataset(subjects, {"intercept"}, {"intercept"});
  const SplineReparam rp = build_reparam(testutil::to_std(data.u), SplineConfig{});
  Hyperparams hp;
  hp.fixed_modes = {TermMode::Absent, TermMode::Absent, TermMode::Absent};

  namespace bq = boost::math::quadrature;
  auto subject_lik = [&](double kappa, int c) {
    auto f = [&](double z) {
      const double p = 1.0 / (1.0 + std::exp(-kappa * z));
      return std::exp(-0.5 * z * z) / std::sqrt(2 * M_PI) * std::pow(p, c) * std::pow(1 - p, n - c);
    };
    return bq::gauss_kronrod<double, 61>::integrate(f, -12.0, 12.0, 10, 1e-12);
  };
  auto joint = [&](double kappa) {
    double l = 1.0;
    for (int c : ones) l *= subject_lik(kappa, c) * std::pow(2.0, n);
    return l * 2.0 * std::exp(-0.5 * kappa * kappa / hp.v0) / std::sqrt(2 * M_PI * hp.v0);
  };
  const double m1 = bq::gauss_kronrod<double, 61>::integrate(joint, 0.0, 40.0, 12, 1e-10);
  const double kmean = bq::gauss_kronrod<double, 61>::integrate([&](double k) { return k * joint(k); }, 0.0, 40.0, 12, 1e-10) / m1;
  const double mppi = m1 / (m1 + 1.0);

  const Model model(data, rp, hp);
  RngStream rng(17);
  ParamState s = init_state(model, rng);
  for (int it = 0; it < 500; ++it) gibbs_sweep(model, s, rng);
  const int sweeps = 60000;
  double in = 0, ksum = 0;
  for (int it = 0; it < sweeps; ++it) {
    gibbs_sweep(model, s, rng);
    in += s.lambda[0];
    ksum += s.kappa(0);
  }
  CHECK(in / sweeps == doctest::Approx(mppi).epsilon(0.04));
  CHECK(ksum / in == doctest::Approx(kmean).epsilon(0.05));
}

TEST_CASE("random-effect moves recover the prior when z carries no information") {
  Fixture f(6, 6, 1, 3, 21);
  f.data.z.setZero();
  for (bool dp : {false, true}) {
    Hyperparams hp;
    hp.dp_random = dp;
    const Model model(f.data, f.rp, hp);
    RngStream rng(22);
    ParamState s = init_state(model, rng);
    const int sweeps = 40000;
    std::vector<double> n_in(4, 0.0), per(3, 0.0);
    double ksum = 0, kn = 0, g2 = 0, gn = 0;
    for (int it = 0; it < sweeps; ++it) {
      gibbs_sweep(model, s, rng);
      int k = 0;
      for (int d = 0; d < 3; ++d) {
        k += s.lambda[d];
        per[d] += s.lambda[d];
        if (s.lambda[d]) {
          ksum += s.kappa(d);
          ++kn;
        }
      }
      n_in[k] += 1;
      if (s.lambda[1] && s.lambda[2]) {
        g2 += s.gamma(2, 1) * s.gamma(2, 1);
        ++gn;
      }
    }
    // beta-binomial(1, 1) over three effects: k uniform on {0, ..., 3}
    for (int k = 0; k < 4; ++k) CHECK(n_in[k] / sweeps == doctest::Approx(0.25).epsilon(0.08));
    for (int d = 0; d < 3; ++d) CHECK(per[d] / sweeps == doctest::Approx(0.5).epsilon(0.06));
    CHECK(ksum / kn == doctest::Approx(std::sqrt(2.0 * hp.v0 / M_PI)).epsilon(0.06));
    CHECK(g2 / gn == doctest::Approx(1.0).epsilon(0.08));
  }
}
