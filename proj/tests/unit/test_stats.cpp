#include <doctest.h>

#include <cmath>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>

#include "helpers.hpp"
#include "tvem/stats.hpp"

using namespace tvem;
namespace bq = boost::math::quadrature;

namespace {

double pg_mean(double z) { return std::fabs(z) < 1e-8 ? 0.25 : std::tanh(z / 2) / (2 * z); }
double pg_var(double z) {
  if (std::fabs(z) < 1e-6) return 1.0 / 24.0;
  return (std::sinh(z) - z) / (4 * z * z * z * std::cosh(z / 2) * std::cosh(z / 2));
}

double integrate(const std::function<double(double)>& f, double a, double b) {
  return bq::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-12);
}

}  // namespace

TEST_CASE("normal helpers") {
  boost::math::normal nd;
  for (double x : {-30.0, -8.0, -1.0, 0.0, 2.5}) {
    CHECK(log_normal_cdf(x) == doctest::Approx(std::log(boost::math::cdf(nd, x))).epsilon(1e-10));
  }
  CHECK(normal_cdf(1.3) == doctest::Approx(boost::math::cdf(nd, 1.3)));
  CHECK(normal_logpdf(0.3, 1.0, 2.0) == doctest::Approx(-0.5 * std::log(2 * kPi * 2.0) - 0.49 / 4.0));
  const std::vector<double> xs{1000.0, 1000.0};
  CHECK(log_sum_exp(xs) == doctest::Approx(1000.0 + std::log(2.0)));
}

TEST_CASE("polya-gamma moments match closed forms") {
  RngStream rng(11);
  for (double z : {0.0, 0.7, 3.0, 12.0}) {
    const int n = 40000;
    double s = 0, ss = 0;
    for (int i = 0; i < n; ++i) {
      const double w = sample_polya_gamma(1, z, rng);
      REQUIRE(w > 0.0);
      s += w;
      ss += w * w;
    }
    const double m = s / n, v = ss / n - m * m;
    const double se = std::sqrt(pg_var(z) / n);
    CHECK(std::fabs(m - pg_mean(z)) < 4 * se);
    CHECK(v == doctest::Approx(pg_var(z)).epsilon(0.06));
  }
  // PG(b, z) is a sum of b PG(1, z)
  double s = 0;
  for (int i = 0; i < 20000; ++i) s += sample_polya_gamma(3, 1.5, rng);
  CHECK(s / 20000 == doctest::Approx(3 * pg_mean(1.5)).epsilon(0.02));
  CHECK_THROWS(sample_polya_gamma(0, 1.0, rng));
}

TEST_CASE("folded normal density and draws") {
  const double m0 = 0.7, v0 = 2.0;
  const double mass = integrate([&](double x) { return std::exp(folded_normal_logpdf(x, m0, v0)); }, 0.0, 40.0);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(folded_normal_logpdf(-0.1, m0, v0), std::domain_error);
  CHECK_THROWS_AS(folded_normal_logpdf(0.1, m0, 0.0), std::domain_error);
  RngStream rng(5);
  const double mean = integrate([&](double x) { return x * std::exp(folded_normal_logpdf(x, m0, v0)); }, 0.0, 40.0);
  double s = 0;
  for (int i = 0; i < 50000; ++i) s += sample_folded_normal(m0, v0, rng);
  CHECK(s / 50000 == doctest::Approx(mean).epsilon(0.02));
}

TEST_CASE("truncated normal below matches its closed-form mean") {
  RngStream rng(7);
  boost::math::normal nd;
  for (double lower : {-1.0, 0.3, 4.0}) {
    const double mean = 0.5, sd = 0.8;
    const double alpha = (lower - mean) / sd;
    const double expected = mean + sd * boost::math::pdf(nd, alpha) / (1 - boost::math::cdf(nd, alpha));
    double s = 0;
    for (int i = 0; i < 40000; ++i) {
      const double x = sample_truncated_normal_below(mean, sd, lower, rng);
      REQUIRE(x >= lower);
      s += x;
    }
    CHECK(s / 40000 == doctest::Approx(expected).epsilon(0.01));
  }
}

TEST_CASE("normal tilt marginal and posterior against quadrature") {
  const double a = 3.2, b = -1.1, var = 2.0;
  const double z = integrate(
      [&](double c) { return std::exp(-0.5 * a * c * c + b * c + normal_logpdf(c, 0.0, var)); }, -40.0, 40.0);
  CHECK(normal_tilt_log_marginal(a, b, var) == doctest::Approx(std::log(z)).epsilon(1e-10));
  const double m1 = integrate(
      [&](double c) { return c * std::exp(-0.5 * a * c * c + b * c + normal_logpdf(c, 0.0, var)); }, -40.0, 40.0) / z;
  RngStream rng(3);
  double s = 0;
  for (int i = 0; i < 40000; ++i) s += sample_normal_tilt(a, b, var, rng);
  CHECK(s / 40000 == doctest::Approx(m1).epsilon(0.02));
}

TEST_CASE("folded normal tilt marginal and posterior against quadrature") {
  for (auto [a, b, m0, v0] : std::vector<std::array<double, 4>>{{3.0, 2.0, 0.0, 10.0}, {40.0, -5.0, 1.0, 5.0}, {0.5, 0.4, 2.0, 1.0}}) {
    auto dens = [&](double k) { return std::exp(-0.5 * a * k * k + b * k + folded_normal_logpdf(k, m0, v0)); };
    const double z = integrate(dens, 0.0, 60.0);
    CHECK(folded_normal_tilt_log_marginal(a, b, m0, v0) == doctest::Approx(std::log(z)).epsilon(1e-9));
    const double m1 = integrate([&](double k) { return k * dens(k); }, 0.0, 60.0) / z;
    RngStream rng(9);
    double s = 0;
    for (int i = 0; i < 40000; ++i) {
      const double k = sample_folded_normal_tilt(a, b, m0, v0, rng);
      REQUIRE(k >= 0.0);
      s += k;
    }
    CHECK(s / 40000 == doctest::Approx(m1).epsilon(0.02));
  }
}

TEST_CASE("generalized pareto fit recovers the shape") {
  RngStream rng(21);
  for (double k : {0.2, 0.6}) {
    std::vector<double> xs;
    for (int i = 0; i < 4000; ++i) xs.push_back(gpd_quantile(rng.uniform(), k, 1.5));
    const GPDFit fit = fit_generalized_pareto(xs, false);
    CHECK(fit.k_hat == doctest::Approx(k).epsilon(0.1 / k));
    CHECK(fit.sigma_hat == doctest::Approx(1.5).epsilon(0.1));
  }
  CHECK(gpd_quantile(0.5, 0.0, 2.0) == doctest::Approx(2.0 * std::log(2.0)));
  // quantile inverts the CDF 1 - (1 + k x / s)^(-1/k)
  const double x = gpd_quantile(0.9, 0.4, 1.2);
  CHECK(1 - std::pow(1 + 0.4 * x / 1.2, -1 / 0.4) == doctest::Approx(0.9));
  const std::vector<double> flat(10, 2.0);
  CHECK_THROWS_AS(fit_generalized_pareto(flat), std::invalid_argument);
  CHECK_THROWS_AS(fit_generalized_pareto(std::vector<double>{1, 2, 3}), std::invalid_argument);
}

TEST_CASE("rng helpers") {
  RngStream a(42, 1), b(42, 1), c(42, 2);
  CHECK(a.normal() == b.normal());
  CHECK(a.uniform() != c.uniform());
  RngStream r(1);
  double s = 0;
  for (int i = 0; i < 40000; ++i) s += r.gamma(3.0, 2.0);
  CHECK(s / 40000 == doctest::Approx(1.5).epsilon(0.02));
  std::vector<double> lw{std::log(0.2), std::log(0.8)};
  int ones = 0;
  for (int i = 0; i < 20000; ++i) ones += r.categorical_log(lw) == 1;
  CHECK(ones / 20000.0 == doctest::Approx(0.8).epsilon(0.02));
}
