#include <doctest.h>

#include <algorithm>
#include <vector>

#include "helpers.hpp"
#include "tvem/spline.hpp"

using namespace tvem;

namespace {

std::vector<double> uniform_grid(int n, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<double> u(n);
  for (auto& x : u) x = rng.uniform();
  std::sort(u.begin(), u.end());
  return u;
}

}  // namespace

TEST_CASE("basis is a partition of unity with local support") {
  const BSplineBasis b(0.0, 2.0, 12);
  for (double u : {0.0, 0.13, 1.0, 1.77, 2.0}) {
    const Eigen::RowVectorXd row = b.evaluate(u);
    CHECK(row.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((row.array() >= 0).all());
    CHECK((row.array() > 0).count() <= 4);
  }
  CHECK_THROWS_AS(b.evaluate(2.1), std::out_of_range);
  CHECK_THROWS_AS(b.evaluate(-0.5), std::out_of_range);
  CHECK_THROWS(BSplineBasis(1.0, 1.0, 10));
}

TEST_CASE("basis design is 20 columns on the data range") {
  const auto u = uniform_grid(300, 1);
  SplineConfig cfg;
  const Eigen::MatrixXd m = build_basis(u, cfg);
  CHECK(m.rows() == 300);
  CHECK(m.cols() == 20);
  CHECK((m.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK_THROWS(build_basis(std::vector<double>(5, 0.3), cfg));
}

TEST_CASE("second-difference penalty has the linear null space") {
  const SplinePenalty p = build_penalty(10);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(10);
  const Eigen::VectorXd lin = Eigen::VectorXd::LinSpaced(10, 0, 9);
  CHECK((p.matrix * ones).norm() < 1e-12);
  CHECK((p.matrix * lin).norm() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p.matrix);
  CHECK((eig.eigenvalues().array() > 1e-10).count() == 8);
}

TEST_CASE("spectral reparam keeps 8 +- 1 columns at 99.9%") {
  for (int n : {500, 2900}) {
    const auto u = uniform_grid(n, static_cast<std::uint64_t>(n));
    const SplineReparam rp = build_reparam(u, SplineConfig{});
    CHECK(rp.rank() >= 7);
    CHECK(rp.rank() <= 9);
    CHECK(rp.kept_eigenvalues.sum() / rp.total_eigenvalue_mass >= 0.999);
    // dropping the last kept column falls short of the target
    CHECK((rp.kept_eigenvalues.sum() - rp.kept_eigenvalues(rp.rank() - 1)) / rp.total_eigenvalue_mass < 0.999);
    const Eigen::MatrixXd again = rp.u_star_at(u);
    CHECK((again - rp.u_star).norm() < 1e-10 * rp.u_star.norm());
  }
}

TEST_CASE("full-rank reparam reconstructs U P^- U'") {
  const auto u = uniform_grid(200, 3);
  SplineConfig cfg;
  cfg.variance_kept = 1.0;
  const BSplineBasis basis = make_basis(u, cfg);
  const SplinePenalty pen = build_penalty(cfg.n_basis);
  const SplineReparam rp = spectral_reparam(basis, u, pen, cfg);
  CHECK(rp.rank() == cfg.n_basis - 2);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(pen.matrix);
  const Eigen::MatrixXd pinv = cod.pseudoInverse();
  const Eigen::MatrixXd u_mat = basis.design(u);
  const Eigen::MatrixXd target = u_mat * pinv * u_mat.transpose();
  const Eigen::MatrixXd approx = rp.u_star * rp.u_star.transpose();
  CHECK((target - approx).norm() / target.norm() < 1e-8);
}

TEST_CASE("evaluate_tve combines shape, linear and main terms") {
  const auto u = uniform_grid(200, 4);
  const SplineReparam rp = build_reparam(u, SplineConfig{});
  const Eigen::VectorXd xi = Eigen::VectorXd::Ones(rp.rank());
  const std::vector<double> grid{0.2, 0.5};
  const Eigen::VectorXd f = evaluate_tve(rp, 0.0, xi, 2.0, -1.0, grid);
  CHECK(f(0) == doctest::Approx(-0.6));
  CHECK(f(1) == doctest::Approx(0.0));
  const Eigen::VectorXd g = evaluate_tve(rp, 1.5, xi, 0.0, 0.0, grid);
  CHECK(g(1) == doctest::Approx(1.5 * rp.u_star_at(std::vector<double>{0.5}).row(0).sum()));
  CHECK_THROWS(evaluate_tve(rp, 1.0, Eigen::VectorXd::Ones(rp.rank() + 1), 0, 0, grid));
}
