#include <doctest.h>

#include <cmath>
#include <numeric>

#include "tvem/simulation.hpp"

using namespace tvem;

TEST_CASE("truth labels of the simulation design") {
  const SimTruth t = make_truth(SimDesign{});
  CHECK(std::accumulate(t.fixed.begin(), t.fixed.end(), 0) == 11);
  CHECK(std::accumulate(t.random.begin(), t.random.end(), 0) == 5);
  CHECK(t.fixed.size() + t.random.size() == 60);
  // f5: main only
  CHECK(t.fixed[term_index(4, TermKind::Main)] == 1);
  CHECK(t.fixed[term_index(4, TermKind::Linear)] == 0);
  CHECK(t.fixed[term_index(4, TermKind::Nonlinear)] == 0);
  // f4: main + linear
  CHECK(t.fixed[term_index(3, TermKind::Linear)] == 1);
  CHECK(t.fixed[term_index(3, TermKind::Nonlinear)] == 0);
  CHECK(t.cluster_items.size() == 30);
  Partition all_single(30);
  std::iota(all_single.begin(), all_single.end(), 0);
  Partition together(30, 0);
  CHECK(variation_of_information(all_single, together) == doctest::Approx(std::log(30.0)));
  CHECK(true_effect(4, 0.3) == -1.6);
  CHECK(true_effect(3, 1.0) == doctest::Approx(0.1));
  CHECK(true_effect(9, 0.5) == 0.0);
}

TEST_CASE("replicates are seed-deterministic with the design's shape") {
  SimDesign d;
  d.n_subjects = 30;
  const SimReplicate a = simulate_replicate(d, 5), b = simulate_replicate(d, 5), c = simulate_replicate(d, 6);
  CHECK(a.data.y == b.data.y);
  CHECK(a.data.x == b.data.x);
  CHECK(a.data.y != c.data.y);
  CHECK(a.data.n_subjects() == 30);
  for (const auto& s : a.subjects) {
    CHECK(s.u.size() >= 20);
    CHECK(s.u.size() <= 40);
    CHECK(std::is_sorted(s.u.begin(), s.u.end()));
  }
  CHECK(a.psi.size() == a.data.n_obs());
  for (Eigen::Index k = 1; k < a.data.x.cols(); ++k) CHECK(std::fabs(a.data.x.col(k).mean()) < 1e-10);
  CHECK(a.data.x.col(0).isOnes());
}

TEST_CASE("outcomes are calibrated to the true linear predictor") {
  const SimReplicate r = simulate_replicate(SimDesign{}, 11);
  // logistic regression of y on (1, psi) by Newton steps
  Eigen::Vector2d coef(0, 1);
  const Eigen::Index n = r.psi.size();
  Eigen::MatrixXd x(n, 2);
  x.col(0).setOnes();
  x.col(1) = r.psi;
  for (int it = 0; it < 30; ++it) {
    const Eigen::ArrayXd p = 1.0 / (1.0 + (-(x * coef).array()).exp());
    const Eigen::VectorXd grad = x.transpose() * (r.data.y.array() - p).matrix();
    const Eigen::MatrixXd h = x.transpose() * (p * (1 - p)).matrix().asDiagonal() * x;
    coef += h.ldlt().solve(grad);
  }
  CHECK(std::fabs(coef(1) - 1.0) < 0.1);
}

TEST_CASE("permuting z columns") {
  SimDesign d;
  d.n_subjects = 5;
  SimReplicate r = simulate_replicate(d, 1);
  const Eigen::MatrixXd z0 = r.data.z;
  std::vector<int> perm(15);
  std::iota(perm.rbegin(), perm.rend(), 0);
  permute_random_effects(r.data, perm);
  CHECK(r.data.z.col(0) == z0.col(14));
  CHECK(r.data.z_names[0] == "x14");
  CHECK_THROWS(permute_random_effects(r.data, {0, 1}));
}

TEST_CASE("study bookkeeping") {
  StudyConfig cfg;
  cfg.n_replicates = 0;
  cfg.variants = default_variants();
  CHECK(run_simulation_study(cfg).empty());
  CHECK(aggregate_study({}).empty());
  CHECK(sensitivity_variants().size() == 7);
  cfg.n_replicates = 1;
  cfg.design.n_subjects = 12;
  cfg.run.n_iter = 40;
  cfg.run.burn_in = 20;
  cfg.run.thin = 2;
  const auto rows = run_simulation_study(cfg);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.error.empty());
    CHECK(r.fsens >= 0.0);
    CHECK(r.fspec <= 1.0);
    CHECK(r.rmcc >= -1.0);
  }
  CHECK(std::isnan(rows[0].fclust));
  CHECK(std::isfinite(rows[1].fclust));
  const auto agg = aggregate_study(rows);
  CHECK(agg.size() == 16);
}
