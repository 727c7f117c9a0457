#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace tvem {

struct SplineConfig {
  int n_basis = 20;
  double variance_kept = 0.999;
  int degree = 3;

  void validate() const;
};

/// Equally spaced cubic B-spline basis over [lower, upper], with the knot grid
/// extended by `degree` knots past each boundary so that every basis function
/// is a translate of the same bump.
class BSplineBasis {
 public:
  BSplineBasis() = default;
  BSplineBasis(double lower, double upper, int n_basis, int degree = 3);

  int n_basis() const { return n_basis_; }
  int degree() const { return degree_; }
  double lower() const { return lower_; }
  double upper() const { return upper_; }
  const std::vector<double>& knots() const { return knots_; }

  /// Row of basis values at u; u must lie in [lower, upper].
  Eigen::RowVectorXd evaluate(double u) const;
  Eigen::MatrixXd design(std::span<const double> u) const;

 private:
  double lower_ = 0.0;
  double upper_ = 1.0;
  int n_basis_ = 0;
  int degree_ = 3;
  std::vector<double> knots_;
};

/// Second-order random-walk penalty P = D2' D2 on the spline coefficients.
struct SplinePenalty {
  Eigen::MatrixXd matrix;
  int order = 2;
};

/// Truncated spectral factor of U P^- U'. `u_star` holds U+ V+^(1/2) for the
/// kept eigenpairs at the training points; `projection` maps a basis row to the
/// same coordinates, so u_star = basis_matrix * projection.
struct SplineReparam {
  BSplineBasis basis;
  Eigen::MatrixXd u_star;
  Eigen::MatrixXd projection;
  Eigen::VectorXd u_linear;
  Eigen::VectorXd kept_eigenvalues;
  double total_eigenvalue_mass = 0.0;

  int rank() const { return static_cast<int>(projection.cols()); }
  /// U* rows for arbitrary u inside the basis range.
  Eigen::MatrixXd u_star_at(std::span<const double> u) const;
};

BSplineBasis make_basis(std::span<const double> u, const SplineConfig& config);
/// B-spline design matrix with knots spanning [min(u), max(u)].
Eigen::MatrixXd build_basis(std::span<const double> u, const SplineConfig& config);
SplinePenalty build_penalty(int n_basis);
SplineReparam spectral_reparam(const BSplineBasis& basis, std::span<const double> u,
                               const SplinePenalty& penalty, const SplineConfig& config);
/// Convenience: basis + penalty + reparam on the pooled u values.
SplineReparam build_reparam(std::span<const double> u, const SplineConfig& config);

/// f(u) = beta_star * U*(u) xi + beta_lin * u + beta_main on u_grid.
Eigen::VectorXd evaluate_tve(const SplineReparam& reparam, double beta_star, const Eigen::VectorXd& xi,
                             double beta_lin, double beta_main, std::span<const double> u_grid);

}  // namespace tvem
