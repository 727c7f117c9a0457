#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tvem/model.hpp"
#include "tvem/rng.hpp"
#include "tvem/sampler.hpp"

namespace tvem {

struct SelectionReport {
  Eigen::VectorXd mppi_fixed;   // T
  Eigen::VectorXd mppi_random;  // D
  std::vector<int> median_fixed;  // indices with MPPI >= 0.5
  std::vector<int> median_random;
  std::vector<int> bfdr_fixed;
  std::vector<int> bfdr_random;
};

/// Snapshots of one or several chains pooled.
std::vector<const ParamState*> pool_snapshots(const std::vector<PosteriorDraws>& chains);

SelectionReport compute_mppi(const std::vector<const ParamState*>& draws, double bfdr_alpha = 0.05);
SelectionReport compute_mppi(const PosteriorDraws& draws, double bfdr_alpha = 0.05);
std::vector<int> median_model(const Eigen::VectorXd& mppi);

/// Largest set {MPPI >= c} whose mean (1 - MPPI) stays <= alpha; ties enter
/// together. Indices are returned in ascending order.
std::vector<int> bfdr_select(const Eigen::VectorXd& mppi, double alpha);

struct CurveBand {
  std::vector<double> grid;
  std::vector<double> lower;   // 2.5%
  std::vector<double> median;  // 50%
  std::vector<double> upper;   // 97.5%
};

/// Model-averaged pointwise quantiles of the odds ratio exp(f_p(u)).
CurveBand tve_curves(const std::vector<const ParamState*>& draws, const SplineReparam& reparam, int covariate,
                     const std::vector<double>& grid);

struct IntervalSummary {
  double mean = 0.0;
  double median = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Posterior of the (d, d) entry of (K Gamma)(K Gamma)' for every effect d.
std::vector<IntervalSummary> random_effect_variances(const std::vector<const ParamState*>& draws);

/// Type-7 sample quantile; `values` is sorted in place.
double quantile(std::vector<double>& values, double prob);

// ---- partitions

using Partition = std::vector<int>;

/// Partition draws over fixed terms `items`: each snapshot maps an included
/// item to its cluster and every excluded item to one shared zero cluster.
std::vector<Partition> fixed_partition_draws(const std::vector<const ParamState*>& draws,
                                             const std::vector<int>& items);
std::vector<Partition> random_partition_draws(const std::vector<const ParamState*>& draws);

/// Pairwise co-clustering frequencies.
Eigen::MatrixXd coclustering_matrix(const std::vector<Partition>& draws);
/// Lower bound of the posterior expected VI loss of `labels`.
double vi_lower_bound_loss(const Partition& labels, const Eigen::MatrixXd& psm);

struct ClusterEstimate {
  Partition labels;
  double expected_loss = 0.0;
};

/// Greedy sequential allocation with `restarts` random item orders followed
/// by reassignment sweeps; keeps the best.
ClusterEstimate salso_cluster(const std::vector<Partition>& draws, RngStream& rng, int restarts = 16);

/// Natural-log variation of information.
double variation_of_information(const Partition& a, const Partition& b);
Partition canonical_labels(const Partition& p);

// ---- predictive checks

struct LooReport {
  double elpd = 0.0;
  Eigen::VectorXd pointwise;
  Eigen::VectorXd pareto_k;
  int n_high_k = 0;  // k > 0.7
};

/// S x n matrix of log-likelihoods per snapshot and observation.
Eigen::MatrixXd loglik_matrix(const Model& model, const std::vector<const ParamState*>& draws);
/// Pareto-smoothed importance-sampling LOO from a loglik matrix.
LooReport psis_loo(const Eigen::MatrixXd& loglik);
/// Smoothed normalized log weights for one observation; returns k-hat.
double psis_smooth(Eigen::VectorXd& log_weights);

struct PpcResult {
  std::string statistic;
  double observed = 0.0;
  double p_value = 1.0;  // two-sided
};

/// Statistics: event_rate, subject_count_q10, subject_count_q50,
/// subject_count_q90, sample_size.
std::vector<PpcResult> posterior_predictive_check(const Model& model, const std::vector<const ParamState*>& draws,
                                                  RngStream& rng);

struct SelectionMetrics {
  double sens = 0.0;
  double spec = 0.0;
  double mcc = 0.0;
};

/// SENS/SPEC of an empty class are reported as 1; MCC is 0 when any margin
/// is empty.
SelectionMetrics selection_metrics(const std::vector<int>& selected, const std::vector<int>& truth);

}  // namespace tvem
