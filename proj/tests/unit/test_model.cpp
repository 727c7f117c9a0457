#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "tvem/model.hpp"
#include "tvem/updates.hpp"

using namespace tvem;

TEST_CASE("lagging pairs predictors at j with the outcome at j + 1") {
  SubjectSeries s;
  s.id = "a";
  s.u = {0.0, 0.5, 1.0};
  s.outcome = {1, 0, 1};
  s.x = Eigen::MatrixXd(3, 1);
  s.x << 10, 20, 30;
  s.z = s.x;
  const Dataset d = make_lagged_dataset({s}, {"v"}, {"v"});
  REQUIRE(d.n_obs() == 2);
  CHECK(d.y(0) == 0.0);
  CHECK(d.y(1) == 1.0);
  CHECK(d.x(1, 0) == 20.0);
  CHECK(d.u(1) == 0.5);
  SubjectSeries short_one = s;
  short_one.u = {0.0};
  short_one.outcome = {1};
  short_one.x = s.x.topRows(1);
  short_one.z = short_one.x;
  CHECK_THROWS(make_lagged_dataset({short_one}, {"v"}, {"v"}));
  s.outcome[2] = 2;
  CHECK_THROWS(make_lagged_dataset({s}, {"v"}, {"v"}));
}

TEST_CASE("standardized columns have mean 0 and variance 1") {
  Dataset d = testutil::small_dataset(8, 6, 3, 2, 1);
  d.x.col(1) = d.x.col(1) * 4.0 + Eigen::VectorXd::Constant(d.n_obs(), 3.0);
  d.z.col(1) = d.x.col(1);
  standardize_columns(d, {"c1"});
  const double m = d.x.col(1).mean();
  const double v = (d.x.col(1).array() - m).square().sum() / (d.n_obs() - 1);
  CHECK(std::fabs(m) < 1e-12);
  CHECK(std::fabs(v - 1.0) < 1e-12);
  CHECK((d.z.col(1) - d.x.col(1)).norm() < 1e-12);
  CHECK(d.scaling[1].standardized);
  CHECK_THROWS(standardize_columns(d, {"nope"}));
}

TEST_CASE("cached psi agrees with the per-observation predictor") {
  const Dataset d = testutil::small_dataset(6, 8, 3, 2, 2);
  const SplineReparam rp = build_reparam(testutil::to_std(d.u), SplineConfig{});
  Hyperparams hp;
  hp.dp_fixed = hp.dp_random = true;
  const Model model(d, rp, hp);
  RngStream rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const ParamState s = init_state(model, rng);
    CHECK_FALSE(check_invariants(model, s).has_value());
    for (int i = 0; i < d.n_subjects(); ++i)
      for (int j = 0; j < d.subject_start[i + 1] - d.subject_start[i]; ++j)
        CHECK(s.psi(d.obs_index(i, j)) == doctest::Approx(linear_predictor(model, s, i, j)).epsilon(1e-12));
  }
}

TEST_CASE("rescaling leaves psi and beta* xi unchanged") {
  const Dataset d = testutil::small_dataset(5, 7, 3, 2, 3);
  const SplineReparam rp = build_reparam(testutil::to_std(d.u), SplineConfig{});
  const Model model(d, rp, Hyperparams{});
  RngStream rng(8);
  for (int rep = 0; rep < 200; ++rep) {
    ParamState s = init_state(model, rng);
    for (int p = 0; p < model.layout.n_fixed; ++p) {
      s.xi.col(p) *= 1.0 + 5.0 * rng.uniform();
      s.beta(term_index(p, TermKind::Nonlinear)) = rng.normal();
    }
    refresh_psi(model, s);
    const Eigen::VectorXd psi0 = s.psi;
    Eigen::MatrixXd phi0(s.xi.rows(), s.xi.cols());
    for (int p = 0; p < model.layout.n_fixed; ++p) phi0.col(p) = s.beta(3 * p) * s.xi.col(p);
    rescale_xi(model, s);
    const Eigen::VectorXd psi1 = compute_psi(model, s);
    CHECK((psi1 - psi0).cwiseAbs().maxCoeff() < 1e-12 * (1.0 + psi0.cwiseAbs().maxCoeff()));
    for (int p = 0; p < model.layout.n_fixed; ++p) {
      CHECK(s.xi.col(p).cwiseAbs().mean() == doctest::Approx(1.0).epsilon(1e-14));
      CHECK((s.beta(3 * p) * s.xi.col(p) - phi0.col(p)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("layout defaults force the intercept triple") {
  const Dataset d = testutil::small_dataset(4, 5, 2, 2, 5);
  const SplineReparam rp = build_reparam(testutil::to_std(d.u), SplineConfig{});
  Hyperparams hp;
  hp.dp_fixed = true;
  const ModelLayout lay = make_layout(d, rp, hp);
  CHECK(lay.fixed_modes[0] == TermMode::Forced);
  CHECK(lay.fixed_modes[2] == TermMode::Forced);
  CHECK(lay.fixed_modes[3] == TermMode::Selectable);
  CHECK(lay.dp_item[1]);
  CHECK_FALSE(lay.dp_item[0]);
  CHECK(lay.gamma0.size() == 1);
  hp.fixed_modes = {TermMode::Forced};
  CHECK_THROWS(make_layout(d, rp, hp));
  Hyperparams bad;
  bad.tau2 = -1;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("bernoulli log-likelihood is stable") {
  CHECK(bernoulli_logit_loglik(1.0, 800.0) == doctest::Approx(0.0));
  CHECK(bernoulli_logit_loglik(0.0, 800.0) == doctest::Approx(-800.0));
  CHECK(bernoulli_logit_loglik(1.0, 0.0) == doctest::Approx(-std::log(2.0)));
}
