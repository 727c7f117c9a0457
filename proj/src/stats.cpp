#include "tvem/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace tvem {

namespace {

constexpr double kPgTrunc = 0.64;
constexpr double kMinVariance = 1e-12;

// Coefficient a_n(x) of the alternating series for J*(1, 0).
double pg_series_coef(int n, double x) {
  const double k = (n + 0.5) * kPi;
  if (x > kPgTrunc) return k * std::exp(-0.5 * k * k * x);
  if (x <= 0.0) return 0.0;
  const double expnt = -1.5 * (std::log(0.5 * kPi) + std::log(x)) + std::log(k) -
                       2.0 * (n + 0.5) * (n + 0.5) / x;
  return std::exp(expnt);
}

// Probability of drawing from the exponential (right) piece of the proposal.
double pg_mass_right(double z) {
  const double t = kPgTrunc;
  const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
  const double b = std::sqrt(1.0 / t) * (t * z - 1.0);
  const double a = -std::sqrt(1.0 / t) * (t * z + 1.0);
  const double x0 = std::log(fz) + fz * t;
  const double xb = x0 - z + log_normal_cdf(b);
  const double xa = x0 + z + log_normal_cdf(a);
  const double q_over_p = 4.0 / kPi * (std::exp(xb) + std::exp(xa));
  return 1.0 / (1.0 + q_over_p);
}

// Inverse Gaussian IG(1/z, 1) truncated to (0, kPgTrunc).
double pg_truncated_inverse_gaussian(double z, RngStream& rng) {
  const double r = kPgTrunc;
  const double mu = z > 0.0 ? 1.0 / z : std::numeric_limits<double>::infinity();
  double x = r + 1.0;
  if (mu > r) {
    double alpha = 0.0;
    while (rng.uniform() > alpha) {
      double e1 = rng.exponential();
      double e2 = rng.exponential();
      while (e1 * e1 > 2.0 * e2 / r) {
        e1 = rng.exponential();
        e2 = rng.exponential();
      }
      x = r / ((1.0 + r * e1) * (1.0 + r * e1));
      alpha = std::exp(-0.5 * z * z * x);
    }
  } else {
    while (x > r) {
      double y = rng.normal();
      y *= y;
      x = mu + 0.5 * mu * mu * y - 0.5 * mu * std::sqrt(4.0 * mu * y + (mu * y) * (mu * y));
      if (rng.uniform() > mu / (mu + x)) x = mu * mu / x;
    }
  }
  return x;
}

double sample_pg1(double z, RngStream& rng) {
  z = 0.5 * std::fabs(z);
  const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
  const double p_right = pg_mass_right(z);
  while (true) {
    double x;
    if (rng.uniform() < p_right) {
      x = kPgTrunc + rng.exponential() / fz;
    } else {
      x = pg_truncated_inverse_gaussian(z, rng);
    }
    double s = pg_series_coef(0, x);
    const double y = rng.uniform() * s;
    for (int n = 1;; ++n) {
      if (n % 2 == 1) {
        s -= pg_series_coef(n, x);
        if (y <= s) return 0.25 * x;
      } else {
        s += pg_series_coef(n, x);
        if (y > s) break;
      }
    }
  }
}

}  // namespace

double normal_logpdf(double x, double mean, double var) {
  const double d = x - mean;
  return -kLogSqrt2Pi - 0.5 * std::log(var) - 0.5 * d * d / var;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double log_normal_cdf(double x) {
  if (x > -20.0) return std::log(normal_cdf(x));
  // Asymptotic expansion of the Mills ratio.
  const double x2 = x * x;
  const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return -kLogSqrt2Pi - 0.5 * x2 - std::log(-x) + std::log(series);
}

double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::fabs(a - b)));
}

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

double sample_polya_gamma(int b, double z, RngStream& rng) {
  if (b < 1) throw std::invalid_argument("sample_polya_gamma: b must be >= 1");
  double total = 0.0;
  for (int i = 0; i < b; ++i) total += sample_pg1(z, rng);
  return total;
}

double folded_normal_logpdf(double x, double m0, double v0) {
  if (x < 0.0) throw std::domain_error("folded_normal_logpdf: x must be >= 0");
  if (!(v0 > 0.0)) throw std::domain_error("folded_normal_logpdf: v0 must be > 0");
  return log_sum_exp(normal_logpdf(x, m0, v0), normal_logpdf(x, -m0, v0));
}

double sample_folded_normal(double m0, double v0, RngStream& rng) {
  if (!(v0 > 0.0)) throw std::domain_error("sample_folded_normal: v0 must be > 0");
  return std::fabs(m0 + std::sqrt(v0) * rng.normal());
}

double sample_truncated_normal_below(double mean, double sd, double lower, RngStream& rng) {
  const double alpha = (lower - mean) / sd;
  if (alpha < 0.45) {
    // plain rejection; acceptance probability >= 1 - Phi(0.45) ~ 0.33
    while (true) {
      const double x = rng.normal();
      if (x >= alpha) return mean + sd * x;
    }
  }
  // Robert (1995) translated-exponential proposal
  const double lam = 0.5 * (alpha + std::sqrt(alpha * alpha + 4.0));
  while (true) {
    const double x = alpha + rng.exponential() / lam;
    const double rho = std::exp(-0.5 * (x - lam) * (x - lam));
    if (rng.uniform() <= rho) return mean + sd * x;
  }
}

double normal_tilt_log_marginal(double a, double b, double var) {
  const double q = a + 1.0 / var;
  return -0.5 * std::log1p(a * var) + 0.5 * b * b / q;
}

double sample_normal_tilt(double a, double b, double var, RngStream& rng) {
  const double post_var = std::max(1.0 / (a + 1.0 / var), kMinVariance);
  return b * post_var + std::sqrt(post_var) * rng.normal();
}

namespace {

struct FoldedTerm {
  double log_mass;
  double mean;
};

// exp(-a k^2/2 + b k) N(k; m, v0) restricted to k >= 0 is a scaled truncated
// N(mean, s2); returns the log of its mass and the location.
FoldedTerm folded_term(double b, double m, double v0, double s2) {
  const double mean = s2 * (b + m / v0);
  const double s = std::sqrt(s2);
  const double log_mass = 0.5 * std::log(s2 / v0) + 0.5 * mean * mean / s2 - 0.5 * m * m / v0 +
                          log_normal_cdf(mean / s);
  return {log_mass, mean};
}

}  // namespace

double folded_normal_tilt_log_marginal(double a, double b, double m0, double v0) {
  const double s2 = std::max(1.0 / (a + 1.0 / v0), kMinVariance);
  const FoldedTerm plus = folded_term(b, m0, v0, s2);
  const FoldedTerm minus = folded_term(b, -m0, v0, s2);
  return log_sum_exp(plus.log_mass, minus.log_mass);
}

double sample_folded_normal_tilt(double a, double b, double m0, double v0, RngStream& rng) {
  const double s2 = std::max(1.0 / (a + 1.0 / v0), kMinVariance);
  const FoldedTerm plus = folded_term(b, m0, v0, s2);
  const FoldedTerm minus = folded_term(b, -m0, v0, s2);
  const double p_plus = 1.0 / (1.0 + std::exp(minus.log_mass - plus.log_mass));
  const double mean = rng.uniform() < p_plus ? plus.mean : minus.mean;
  return sample_truncated_normal_below(mean, std::sqrt(s2), 0.0, rng);
}

GPDFit fit_generalized_pareto(std::span<const double> tail, bool shrink_k) {
  const std::size_t n = tail.size();
  if (n < 5) throw std::invalid_argument("fit_generalized_pareto: need at least 5 values");
  std::vector<double> x(tail.begin(), tail.end());
  for (double v : x) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument("fit_generalized_pareto: values must be positive and finite");
  }
  std::sort(x.begin(), x.end());
  if (x.back() - x.front() <= 1e-12 * x.back())
    throw std::invalid_argument("fit_generalized_pareto: zero-variance tail");

  constexpr double prior = 3.0;
  const std::size_t m = 30 + static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  const std::size_t q1 = static_cast<std::size_t>(std::floor(n / 4.0 + 0.5));
  const double xstar = x[q1 > 0 ? q1 - 1 : 0];

  std::vector<double> theta(m), loglik(m);
  for (std::size_t j = 0; j < m; ++j) {
    theta[j] = 1.0 / x.back() + (1.0 - std::sqrt(m / (j + 0.5))) / prior / xstar;
    const double a = -theta[j];
    double k = 0.0;
    for (double v : x) k += std::log1p(a * v);
    k /= static_cast<double>(n);
    loglik[j] = static_cast<double>(n) * (std::log(a / k) - k - 1.0);
  }
  const double lse = log_sum_exp(loglik);
  double theta_hat = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double w = std::exp(loglik[j] - lse);
    if (std::isfinite(w)) theta_hat += theta[j] * w;
  }
  double k = 0.0;
  for (double v : x) k += std::log1p(-theta_hat * v);
  k /= static_cast<double>(n);
  const double sigma = -k / theta_hat;
  if (shrink_k) {
    const double nd = static_cast<double>(n);
    k = k * nd / (nd + 10.0) + 10.0 * 0.5 / (nd + 10.0);
  }
  if (std::isnan(k)) k = std::numeric_limits<double>::infinity();
  return {k, sigma};
}

double gpd_quantile(double p, double k, double sigma) {
  if (std::fabs(k) < 1e-12) return -sigma * std::log1p(-p);
  return sigma * std::expm1(-k * std::log1p(-p)) / k;
}

}  // namespace tvem
