#pragma once

#include <span>
#include <stdexcept>

#include "tvem/rng.hpp"

namespace tvem {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double normal_logpdf(double x, double mean, double var);
/// log Phi(x), accurate far into the lower tail.
double log_normal_cdf(double x);
double normal_cdf(double x);
double log_sum_exp(double a, double b);
double log_sum_exp(std::span<const double> xs);

/// Exact draw from the Polya-Gamma PG(b, z) law. b = 1 uses the Devroye-type
/// alternating-series accept/reject sampler; integer b > 1 sums b such draws.
double sample_polya_gamma(int b, double z, RngStream& rng);

/// log of (2 pi v0)^(-1/2) [exp(-(x-m0)^2 / 2v0) + exp(-(x+m0)^2 / 2v0)], x >= 0.
double folded_normal_logpdf(double x, double m0, double v0);
/// |N(m0, v0)|.
double sample_folded_normal(double m0, double v0, RngStream& rng);

/// N(mean, sd^2) restricted to [lower, inf), exact.
double sample_truncated_normal_below(double mean, double sd, double lower, RngStream& rng);

// A scalar coefficient c whose augmented log-likelihood is -a c^2/2 + b c
// (relative to c = 0) combines with a prior in closed form. The helpers below
// give the log marginal  log of the integral of exp(-a c^2/2 + b c) dPrior(c)  and
// an exact draw from the tilted (posterior) law.

/// Prior N(0, var).
double normal_tilt_log_marginal(double a, double b, double var);
double sample_normal_tilt(double a, double b, double var, RngStream& rng);

/// Prior FN(m0, v0) on [0, inf).
double folded_normal_tilt_log_marginal(double a, double b, double m0, double v0);
double sample_folded_normal_tilt(double a, double b, double m0, double v0, RngStream& rng);

/// Generalized Pareto fit (k is the shape; k > 0 heavy tail).
struct GPDFit {
  double k_hat;
  double sigma_hat;
};

/// Zhang-Stephens profile-likelihood fit of the generalized Pareto to
/// exceedances, with the weakly informative shrinkage of k used by PSIS.
/// Throws std::invalid_argument for fewer than 5 values, non-positive values,
/// or a zero-variance tail.
GPDFit fit_generalized_pareto(std::span<const double> tail, bool shrink_k = true);

/// Quantile function of GPD(k, sigma) with location 0.
double gpd_quantile(double p, double k, double sigma);

}  // namespace tvem
