#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tvem/rng.hpp"
#include "tvem/spline.hpp"

namespace tvem {

/// Position of a coefficient inside a covariate's (beta*, beta_lin, beta_main) triple.
enum class TermKind { Nonlinear = 0, Linear = 1, Main = 2 };

/// Selectable terms carry a spike-and-slab indicator; forced terms are always
/// in the model; absent terms are pinned at zero.
enum class TermMode { Selectable, Forced, Absent };

inline int term_index(int covariate, TermKind kind) { return 3 * covariate + static_cast<int>(kind); }
inline int term_covariate(int t) { return t / 3; }
inline TermKind term_kind(int t) { return static_cast<TermKind>(t % 3); }
std::string term_kind_name(TermKind kind);

/// Recorded transform applied to an ingested covariate column.
struct ColumnScaling {
  std::string name;
  bool standardized = false;
  double mean = 0.0;
  double sd = 1.0;
};

/// One subject's raw assessment sequence, before lag alignment.
struct SubjectSeries {
  std::string id;
  std::vector<double> u;
  std::vector<int> outcome;
  Eigen::MatrixXd x;  // n_i x P
  Eigen::MatrixXd z;  // n_i x D
};

/// Modeled observations flattened subject by subject. Row o pairs the
/// predictors of assessment j with the outcome of assessment j + 1.
struct Dataset {
  std::vector<std::string> subject_ids;
  std::vector<int> subject_start;  // size N + 1
  std::vector<int> subject_of;     // size n_obs
  Eigen::MatrixXd x;
  Eigen::MatrixXd z;
  Eigen::VectorXd u;
  Eigen::VectorXd y;
  std::vector<std::string> x_names;
  std::vector<std::string> z_names;
  std::vector<ColumnScaling> scaling;

  int n_subjects() const { return static_cast<int>(subject_ids.size()); }
  int n_obs() const { return static_cast<int>(y.size()); }
  int n_fixed() const { return static_cast<int>(x.cols()); }
  int n_random() const { return static_cast<int>(z.cols()); }
  int obs_index(int subject, int occasion) const;

  void validate() const;
};

/// Pair x/z/u at j with the outcome at j + 1 within each subject.
Dataset make_lagged_dataset(const std::vector<SubjectSeries>& subjects, std::vector<std::string> x_names,
                            std::vector<std::string> z_names);

/// Standardize the named columns of x and z over the modeled rows (sample sd);
/// a column present in both uses the x statistics for both.
void standardize_columns(Dataset& data, const std::vector<std::string>& names);

struct Hyperparams {
  double tau2 = 2.0;
  double m0 = 0.0;
  double v0 = 10.0;
  double a_nu = 1.0, b_nu = 1.0;
  double a_lambda = 1.0, b_lambda = 1.0;
  double a_theta = 1.0, b_theta = 1.0;
  double a_A = 1.0, b_A = 1.0;
  /// Prior of the free Gamma entries, ordered (d, l) for d > l row by row.
  /// Empty means zero mean / identity covariance.
  Eigen::VectorXd gamma0;
  Eigen::MatrixXd V_gamma;
  bool dp_fixed = false;
  bool dp_random = false;
  /// Per-term overrides; empty means the intercept triple is forced and
  /// everything else selectable.
  std::vector<TermMode> fixed_modes;
  std::vector<TermMode> random_modes;

  void validate() const;
};

/// Index of the free Gamma entry (d, l), d > l.
inline int gamma_entry(int d, int l) { return d * (d - 1) / 2 + l; }

struct ModelLayout {
  int n_fixed = 0;    // P
  int n_random = 0;   // D
  int rank = 0;       // r
  int n_terms = 0;    // T = 3P
  std::vector<TermMode> fixed_modes;
  std::vector<TermMode> random_modes;
  std::vector<bool> dp_item;  // main/linear terms clustered under the fixed-effect DP
  Eigen::VectorXd gamma0;
  Eigen::MatrixXd V_gamma;
};

ModelLayout make_layout(const Dataset& data, const SplineReparam& spline, const Hyperparams& hp);

/// Immutable model inputs shared by every update of a chain. Holds references:
/// the dataset and spline factor must outlive it.
struct Model {
  Model(const Dataset& data, const SplineReparam& spline, Hyperparams hp);

  const Dataset& data;
  const SplineReparam& spline;
  Hyperparams hp;
  ModelLayout layout;
  Eigen::VectorXd kappa_obs;  // y - 1/2
};

struct ParamState {
  Eigen::VectorXd beta;   // T, ordered (beta*, beta_lin, beta_main) per covariate
  std::vector<int> nu;    // T
  Eigen::MatrixXd xi;     // r x P
  Eigen::MatrixXd mu;     // r x P, entries +-1
  Eigen::VectorXd kappa;  // D
  std::vector<int> lambda;
  Eigen::MatrixXd gamma;  // D x D unit lower-triangular
  Eigen::MatrixXd zeta;   // D x N
  Eigen::VectorXd omega;  // n_obs
  std::vector<int> c_beta;   // T; -1 unless an included DP item
  std::vector<int> c_kappa;  // D; -1 unless included under the random-effect DP
  double vartheta = 1.0;
  double a_conc = 1.0;
  /// Cached linear predictor; every update keeps it in sync.
  Eigen::VectorXd psi;
};

/// Design value of fixed term t at observation o (beta_t excluded).
double fixed_design(const Model& model, const ParamState& state, int t, int o);
Eigen::VectorXd fixed_design_column(const Model& model, const ParamState& state, int t);
/// Design of kappa_d: z_od (Gamma zeta_i)_d.
Eigen::VectorXd kappa_design_column(const Model& model, const ParamState& state, int d);

/// psi at modeled pair (subject i, occasion j), computed from scratch.
double linear_predictor(const Model& model, const ParamState& state, int subject, int occasion);
Eigen::VectorXd compute_psi(const Model& model, const ParamState& state);
void refresh_psi(const Model& model, ParamState& state);

/// Log Bernoulli-logit likelihood per modeled observation.
Eigen::VectorXd pointwise_loglik(const Model& model, const ParamState& state);
double bernoulli_logit_loglik(double y, double psi);

/// Divide each xi_p by mean |xi_p| and multiply beta*_p by the same factor.
void rescale_xi(const Model& model, ParamState& state);

ParamState init_state(const Model& model, RngStream& rng);

/// Zeroing invariants: nu = 0 => beta = 0, lambda = 0 => kappa = 0, kappa >= 0,
/// Gamma unit lower-triangular. Returns a message describing the first violation.
std::optional<std::string> check_invariants(const Model& model, const ParamState& state);

}  // namespace tvem
