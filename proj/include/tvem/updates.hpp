#pragma once

#include <vector>

#include <Eigen/Dense>

#include "tvem/model.hpp"
#include "tvem/rng.hpp"

namespace tvem {

/// Completion of the square of the PG-augmented log-likelihood in one scalar
/// coefficient c: -a c^2 / 2 + b c + const.
struct GaussianPseudoLik {
  double a = 0.0;
  double b = 0.0;
};

enum class CoefficientFamily { Fixed, Random };

struct CoefficientId {
  CoefficientFamily family = CoefficientFamily::Fixed;
  int index = 0;
};

/// Pseudo-likelihood of a coefficient with design column `design` whose
/// current value is `current`, taken against the cached psi.
GaussianPseudoLik pseudo_lik_from_column(const Model& model, const ParamState& state,
                                         const Eigen::VectorXd& design, double current);
GaussianPseudoLik pseudo_lik_for_coef(const Model& model, const ParamState& state, CoefficientId which);

/// Inclusion prior odds P(on)/P(off) of one selectable term given the others,
/// with the shared inclusion probability integrated out.
double inclusion_prior_odds(double a, double b, int n_included_others, int n_excluded_others);

void update_omega(const Model& model, ParamState& state, RngStream& rng);

/// Neal's algorithm 2 reassignment of included main/linear coefficients under
/// the fixed-effect DP, followed by a redraw of every cluster's shared value.
void update_beta_clusters(const Model& model, ParamState& state, RngStream& rng);

/// Between step (add/delete each selectable term) and within step (redraw
/// every included coefficient or cluster value).
void update_beta_nu(const Model& model, ParamState& state, RngStream& rng);

/// Draw xi_p for every covariate (conjugate when beta*_p is in the model, prior
/// otherwise), then rescale so mean |xi_p| = 1.
void update_xi_and_rescale(const Model& model, ParamState& state, RngStream& rng);

void update_mu(ParamState& state, RngStream& rng);
/// P(mu = +1 | xi) = 1 / (1 + exp(-2 xi)).
double mu_plus_probability(double xi);

/// Escobar-West two-step Gibbs draw of a DP concentration with a Gamma(a, b)
/// prior; returns a prior draw when there are no items.
double update_concentration(double current, int n_items, int n_clusters, double a, double b, RngStream& rng);

void update_vartheta(const Model& model, ParamState& state, RngStream& rng);
void update_a_conc(const Model& model, ParamState& state, RngStream& rng);

void update_kappa_clusters(const Model& model, ParamState& state, RngStream& rng);
/// Add/delete of each selectable kappa_d with zeta integrated out (scale drawn
/// from the slab or the urn) and one included/excluded swap, then a fresh zeta
/// draw and the within step.
void update_kappa_lambda(const Model& model, ParamState& state, RngStream& rng);

/// Gamma entry (d, l), d > l, is free when effects d and l are both included;
/// every other entry is held at zero.
bool gamma_entry_free(const ParamState& state, int d, int l);
void update_gamma(const Model& model, ParamState& state, RngStream& rng);
void update_zeta(const Model& model, ParamState& state, RngStream& rng);

/// Number of included coefficients and distinct clusters under each DP.
struct ClusterCounts {
  int n_items = 0;
  int n_clusters = 0;
};
ClusterCounts beta_cluster_counts(const Model& model, const ParamState& state);
ClusterCounts kappa_cluster_counts(const Model& model, const ParamState& state);

/// One full iteration in sampler order.
void gibbs_sweep(const Model& model, ParamState& state, RngStream& rng);

}  // namespace tvem
