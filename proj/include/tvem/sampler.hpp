#pragma once

#include <cstdint>
#include <vector>

#include "tvem/model.hpp"
#include "tvem/updates.hpp"

namespace tvem {

struct RunConfig {
  int n_iter = 10000;
  int burn_in = 5000;
  int thin = 10;
  int n_chains = 1;
  std::uint64_t seed = 1;
  /// Sweeps between progress lines on stderr; 0 is silent.
  int progress_every = 0;

  void validate() const;
  int n_snapshots() const { return (n_iter - burn_in) / thin; }
};

/// Thinned post-burn-in states of one chain. Snapshots keep every parameter
/// except omega and psi (left empty).
struct PosteriorDraws {
  std::vector<ParamState> snapshots;
  std::vector<double> loglik_trace;  // one per sweep
  int burn_in = 0;
  int thin = 1;
  std::uint64_t seed = 0;
  int chain_id = 0;

  int size() const { return static_cast<int>(snapshots.size()); }
};

PosteriorDraws run_chain(const Model& model, const RunConfig& run, int chain_id);
/// One thread per chain, chain c seeded with (run.seed, c).
std::vector<PosteriorDraws> run_chains(const Model& model, const RunConfig& run);

struct RhatResult {
  double value = 1.0;
  double inclusion = 1.0;      // pooled inclusion proportion
  bool low_inclusion = false;  // inclusion < 0.5
};

/// Gelman-Rubin potential scale reduction on equal-length chains (longer
/// chains are truncated to the shortest). Constant draws give 1.
double gelman_rubin(const std::vector<std::vector<double>>& chains);
/// R-hat of one coefficient over the draws where it is included.
RhatResult rhat(const std::vector<PosteriorDraws>& chains, CoefficientId which);

/// Inclusion-indicator means, fixed terms then random effects.
Eigen::VectorXd inclusion_means(const PosteriorDraws& draws);
double pearson_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
double mppi_correlation(const PosteriorDraws& a, const PosteriorDraws& b);

}  // namespace tvem
