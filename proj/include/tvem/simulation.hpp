#pragma once

#include <atomic>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tvem/inference.hpp"
#include "tvem/model.hpp"
#include "tvem/sampler.hpp"
#include "tvem/spline.hpp"

namespace tvem {

struct SimDesign {
  int n_subjects = 100;
  int min_assessments = 20;
  int max_assessments = 40;
  int n_covariates = 15;  // intercept + correlated normals
  double ar_weight = 0.3;
  double jitter_prob = 0.5;
  double re_variance = 0.75;
  double re_covariance = 0.4;
  int n_active_random = 5;
  bool standardize = true;

  void validate() const;
};

/// True log odds ratio of the first five covariates; zero beyond.
double true_effect(int covariate, double t);

struct SimTruth {
  std::vector<int> fixed;   // 3P, term order
  std::vector<int> random;  // D
  std::vector<int> cluster_items;  // main/linear term indices
  Partition fixed_clusters;        // over cluster_items
  Partition random_clusters;       // over D
};

struct SimReplicate {
  std::vector<SubjectSeries> subjects;  // raw assessments, before lagging
  Dataset data;                         // lagged (and standardized) modeled pairs
  Eigen::VectorXd psi;                  // true linear predictor per modeled pair
  SimTruth truth;
};

SimTruth make_truth(const SimDesign& design);
SimReplicate simulate_replicate(const SimDesign& design, std::uint64_t seed);

/// Reorder the z columns of `data` by `perm` (new column k = old perm[k]).
void permute_random_effects(Dataset& data, const std::vector<int>& perm);

struct StudyVariant {
  std::string name;
  Hyperparams hp;
  bool permute_z = false;
};

/// PGBVS (no DP) and PGBVSDP (both DPs) at the simulation defaults.
std::vector<StudyVariant> default_variants();
/// Base tau2 = v0 = 5 plus one-at-a-time changes of the inclusion, slab and
/// concentration hyperparameters.
std::vector<StudyVariant> sensitivity_variants();

struct StudyConfig {
  SimDesign design;
  SplineConfig spline;
  RunConfig run;
  std::vector<StudyVariant> variants;
  int n_replicates = 10;
  std::uint64_t seed = 1;
  int workers = 1;
  bool verbose = false;
};

struct StudyRow {
  int replicate = 0;
  std::string variant;
  double fsens = 0, fspec = 0, fmcc = 0;
  double rsens = 0, rspec = 0, rmcc = 0;
  double fclust = std::numeric_limits<double>::quiet_NaN();
  double rclust = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
  Eigen::VectorXd mppi_random;  // original z order
  std::string error;            // non-empty when the replicate failed
};

/// Posterior draws of one replicate under one variant. Owns the (possibly
/// z-permuted) data and spline factor the draws refer to.
struct ReplicateFit {
  Dataset data;
  SplineReparam reparam;
  Hyperparams hp;
  std::vector<int> perm;  // fitted z column k = original column perm[k]
  std::vector<PosteriorDraws> chains;
  double seconds = 0.0;
};

ReplicateFit fit_replicate(const SimReplicate& rep, const StudyVariant& variant, const SplineConfig& spline,
                           const RunConfig& run, std::uint64_t seed);
StudyRow score_replicate(const ReplicateFit& fit, const SimTruth& truth, const std::string& variant, int replicate,
                         std::uint64_t seed);

/// Fit one replicate under one variant and score it against the truth.
StudyRow evaluate_replicate(const SimReplicate& rep, const StudyVariant& variant, const SplineConfig& spline,
                            const RunConfig& run, int replicate, std::uint64_t seed);

std::vector<StudyRow> run_simulation_study(const StudyConfig& config);

struct MetricSummary {
  std::string variant;
  std::string metric;
  double mean = 0.0;
  double sd = 0.0;
  int n = 0;
};

/// Mean (sd) per variant and metric over successful rows.
std::vector<MetricSummary> aggregate_study(const std::vector<StudyRow>& rows);

}  // namespace tvem
