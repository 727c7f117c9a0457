#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace tvem {

/// Reproducible random stream keyed by (seed, stream id). Copying a stream
/// copies its full state, so a copy replays the same draws.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  double exponential();
  /// Gamma with shape/rate parameterization.
  double gamma(double shape, double rate);
  double beta(double a, double b);
  bool bernoulli(double p) { return uniform() < p; }
  /// Index drawn with probability proportional to exp(log_weights[k]).
  std::size_t categorical_log(std::span<const double> log_weights);
  std::size_t uniform_index(std::size_t n);

  /// Independent stream derived from this one's seed.
  RngStream substream(std::uint64_t id) const;

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace tvem
