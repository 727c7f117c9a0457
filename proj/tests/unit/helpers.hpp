#pragma once

#include <vector>

#include <Eigen/Dense>

#include "tvem/model.hpp"
#include "tvem/rng.hpp"

namespace testutil {

// Small random longitudinal dataset: intercept + (p - 1) normals, z = first d columns of x.
inline tvem::Dataset small_dataset(int n_subjects, int n_per, int p, int d, std::uint64_t seed) {
  tvem::RngStream rng(seed, 99);
  std::vector<tvem::SubjectSeries> subjects;
  for (int i = 0; i < n_subjects; ++i) {
    tvem::SubjectSeries s;
    s.id = "id" + std::to_string(i);
    s.x.resize(n_per, p);
    s.z.resize(n_per, d);
    for (int j = 0; j < n_per; ++j) {
      s.u.push_back((j + rng.uniform()) / n_per);
      s.outcome.push_back(rng.bernoulli(0.4) ? 1 : 0);
      s.x(j, 0) = 1.0;
      for (int k = 1; k < p; ++k) s.x(j, k) = rng.normal();
    }
    s.z = s.x.leftCols(d);
    subjects.push_back(s);
  }
  std::vector<std::string> xn, zn;
  for (int k = 0; k < p; ++k) xn.push_back("c" + std::to_string(k));
  for (int k = 0; k < d; ++k) zn.push_back("c" + std::to_string(k));
  return tvem::make_lagged_dataset(subjects, xn, zn);
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// Two-sample-free KS statistic of a sample against a CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> xs, Cdf cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, f - i / n, (i + 1) / n - f});
  }
  return d;
}

// Asymptotic Kolmogorov p-value with the Stephens small-sample correction.
inline double ks_pvalue(double d, double n) {
  const double en = std::sqrt(n);
  const double lam = (en + 0.12 + 0.11 / en) * d;
  double sum = 0.0, sign = 1.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = sign * 2.0 * std::exp(-2.0 * j * j * lam * lam);
    sum += term;
    if (std::fabs(term) < 1e-12) break;
    sign = -sign;
  }
  return std::clamp(sum, 0.0, 1.0);
}

}  // namespace testutil
