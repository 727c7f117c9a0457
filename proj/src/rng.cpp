#include "tvem/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace tvem {

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x7465766dU};
  return std::mt19937_64(seq);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(make_engine(seed, stream)) {}

double RngStream::uniform() {
  // 53 random bits, shifted off zero.
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() { return normal_(engine_); }

double RngStream::exponential() { return -std::log(uniform()); }

double RngStream::gamma(double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw std::invalid_argument("gamma: shape and rate must be > 0");
  std::gamma_distribution<double> dist(shape, 1.0 / rate);
  return dist(engine_);
}

double RngStream::beta(double a, double b) {
  const double x = gamma(a, 1.0);
  const double y = gamma(b, 1.0);
  return x / (x + y);
}

std::size_t RngStream::categorical_log(std::span<const double> log_weights) {
  if (log_weights.empty()) throw std::invalid_argument("categorical_log: no weights");
  const double mx = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(mx)) {
    if (mx > 0) {
      // +inf weight dominates
      return static_cast<std::size_t>(std::max_element(log_weights.begin(), log_weights.end()) -
                                      log_weights.begin());
    }
    throw std::invalid_argument("categorical_log: all weights are zero");
  }
  double total = 0.0;
  for (double lw : log_weights) total += std::exp(lw - mx);
  double target = uniform() * total;
  for (std::size_t k = 0; k < log_weights.size(); ++k) {
    target -= std::exp(log_weights[k] - mx);
    if (target <= 0.0) return k;
  }
  // rounding: return last positive-weight index
  for (std::size_t k = log_weights.size(); k-- > 0;) {
    if (std::isfinite(log_weights[k])) return k;
  }
  return log_weights.size() - 1;
}

std::size_t RngStream::uniform_index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

RngStream RngStream::substream(std::uint64_t id) const {
  return RngStream(seed_, (stream_ + 1) * 0x9E3779B97F4A7C15ULL + id);
}

}  // namespace tvem
