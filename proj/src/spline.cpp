#include "tvem/spline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tvem {

void SplineConfig::validate() const {
  if (n_basis < 4) throw std::invalid_argument("SplineConfig: n_basis must be >= 4");
  if (!(variance_kept > 0.0 && variance_kept <= 1.0))
    throw std::invalid_argument("SplineConfig: variance_kept must be in (0, 1]");
  if (degree < 1 || degree >= n_basis) throw std::invalid_argument("SplineConfig: bad degree");
}

BSplineBasis::BSplineBasis(double lower, double upper, int n_basis, int degree)
    : lower_(lower), upper_(upper), n_basis_(n_basis), degree_(degree) {
  if (!(lower < upper)) throw std::invalid_argument("BSplineBasis: need lower < upper");
  if (n_basis <= degree) throw std::invalid_argument("BSplineBasis: n_basis must exceed degree");
  const double h = (upper - lower) / (n_basis - degree);
  knots_.resize(static_cast<std::size_t>(n_basis + degree + 1));
  for (int k = 0; k < n_basis + degree + 1; ++k) knots_[k] = lower + (k - degree) * h;
  // pin the boundary knots exactly
  knots_[degree] = lower;
  knots_[n_basis] = upper;
}

Eigen::RowVectorXd BSplineBasis::evaluate(double u) const {
  const double tol = 1e-9 * (upper_ - lower_);
  if (u < lower_ - tol || u > upper_ + tol)
    throw std::out_of_range("BSplineBasis: u outside the basis range");
  u = std::clamp(u, lower_, upper_);

  // interval index k with knots_[k] <= u < knots_[k+1], k in [degree, n_basis-1]
  const double h = (upper_ - lower_) / (n_basis_ - degree_);
  int k = degree_ + static_cast<int>(std::floor((u - lower_) / h));
  k = std::clamp(k, degree_, n_basis_ - 1);
  while (k > degree_ && u < knots_[k]) --k;
  while (k < n_basis_ - 1 && u >= knots_[k + 1]) ++k;

  std::vector<double> n(degree_ + 1, 0.0), left(degree_ + 1), right(degree_ + 1);
  n[0] = 1.0;
  for (int j = 1; j <= degree_; ++j) {
    left[j] = u - knots_[k + 1 - j];
    right[j] = knots_[k + j] - u;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = n[r] / (right[r + 1] + left[j - r]);
      n[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    n[j] = saved;
  }
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n_basis_);
  for (int j = 0; j <= degree_; ++j) row(k - degree_ + j) = n[j];
  return row;
}

Eigen::MatrixXd BSplineBasis::design(std::span<const double> u) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(u.size()), n_basis_);
  for (std::size_t i = 0; i < u.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = evaluate(u[i]);
  return out;
}

BSplineBasis make_basis(std::span<const double> u, const SplineConfig& config) {
  config.validate();
  if (u.empty()) throw std::invalid_argument("build_basis: u is empty");
  const auto [lo, hi] = std::minmax_element(u.begin(), u.end());
  if (!(*lo < *hi)) throw std::invalid_argument("build_basis: u is constant");
  return BSplineBasis(*lo, *hi, config.n_basis, config.degree);
}

Eigen::MatrixXd build_basis(std::span<const double> u, const SplineConfig& config) {
  return make_basis(u, config).design(u);
}

SplinePenalty build_penalty(int n_basis) {
  if (n_basis < 4) throw std::invalid_argument("build_penalty: n_basis must be >= 4");
  Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(n_basis - 2, n_basis);
  for (int i = 0; i < n_basis - 2; ++i) {
    d2(i, i) = 1.0;
    d2(i, i + 1) = -2.0;
    d2(i, i + 2) = 1.0;
  }
  return {d2.transpose() * d2, 2};
}

Eigen::MatrixXd SplineReparam::u_star_at(std::span<const double> u) const {
  return basis.design(u) * projection;
}

SplineReparam spectral_reparam(const BSplineBasis& basis, std::span<const double> u,
                               const SplinePenalty& penalty, const SplineConfig& config) {
  config.validate();
  const int nb = basis.n_basis();
  if (penalty.matrix.rows() != nb || penalty.matrix.cols() != nb)
    throw std::invalid_argument("spectral_reparam: basis and penalty dimensions disagree");

  // P^- = L L' with L = E+ Lambda+^(-1/2)
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(penalty.matrix);
  if (eig.info() != Eigen::Success) throw std::runtime_error("spectral_reparam: eigensolver failed");
  const Eigen::VectorXd& lam = eig.eigenvalues();
  const double tol = 1e-10 * lam.maxCoeff();
  std::vector<int> pos;
  for (int j = 0; j < nb; ++j)
    if (lam(j) > tol) pos.push_back(j);
  Eigen::MatrixXd half_pinv(nb, static_cast<Eigen::Index>(pos.size()));
  for (std::size_t c = 0; c < pos.size(); ++c)
    half_pinv.col(static_cast<Eigen::Index>(c)) = eig.eigenvectors().col(pos[c]) / std::sqrt(lam(pos[c]));

  // U P^- U' = M M'; its positive eigenpairs come from the SVD of M.
  const Eigen::MatrixXd design = basis.design(u);
  const Eigen::MatrixXd m = design * half_pinv;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw std::runtime_error("spectral_reparam: SVD failed");
  const Eigen::VectorXd eigvals = svd.singularValues().array().square();
  const double total = eigvals.sum();
  const double eig_tol = 1e-10 * (eigvals.size() > 0 ? eigvals(0) : 0.0);

  int r = 0;
  double kept = 0.0;
  while (r < eigvals.size() && eigvals(r) > eig_tol) {
    kept += eigvals(r);
    ++r;
    if (kept >= config.variance_kept * total * (1.0 - 1e-12)) break;
  }
  if (r == 0) throw std::runtime_error("spectral_reparam: no positive eigenvalues");

  SplineReparam out;
  out.basis = basis;
  out.projection = half_pinv * svd.matrixV().leftCols(r);
  out.u_star = design * out.projection;
  out.u_linear = Eigen::Map<const Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size()));
  out.kept_eigenvalues = eigvals.head(r);
  out.total_eigenvalue_mass = total;
  return out;
}

SplineReparam build_reparam(std::span<const double> u, const SplineConfig& config) {
  const BSplineBasis basis = make_basis(u, config);
  return spectral_reparam(basis, u, build_penalty(config.n_basis), config);
}

Eigen::VectorXd evaluate_tve(const SplineReparam& reparam, double beta_star, const Eigen::VectorXd& xi,
                             double beta_lin, double beta_main, std::span<const double> u_grid) {
  if (xi.size() != reparam.rank()) throw std::invalid_argument("evaluate_tve: xi length != rank");
  const Eigen::MatrixXd us = reparam.u_star_at(u_grid);
  Eigen::VectorXd f = beta_star * (us * xi);
  for (std::size_t g = 0; g < u_grid.size(); ++g)
    f(static_cast<Eigen::Index>(g)) += beta_lin * u_grid[g] + beta_main;
  return f;
}

}  // namespace tvem
