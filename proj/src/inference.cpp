#include "tvem/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "tvem/stats.hpp"

namespace tvem {

std::vector<const ParamState*> pool_snapshots(const std::vector<PosteriorDraws>& chains) {
  std::vector<const ParamState*> out;
  for (const auto& c : chains)
    for (const auto& s : c.snapshots) out.push_back(&s);
  return out;
}

std::vector<int> median_model(const Eigen::VectorXd& mppi) {
  std::vector<int> out;
  for (Eigen::Index k = 0; k < mppi.size(); ++k)
    if (mppi(k) >= 0.5) out.push_back(static_cast<int>(k));
  return out;
}

std::vector<int> bfdr_select(const Eigen::VectorXd& mppi, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("bfdr_select: alpha must be in (0, 1)");
  std::vector<int> order(static_cast<std::size_t>(mppi.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return mppi(a) > mppi(b); });
  std::size_t best = 0;
  double fdr_sum = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    fdr_sum += 1.0 - mppi(order[k]);
    const bool tie_next = k + 1 < order.size() && mppi(order[k + 1]) == mppi(order[k]);
    if (tie_next) continue;
    if (fdr_sum / static_cast<double>(k + 1) <= alpha) best = k + 1;
  }
  std::vector<int> out(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(best));
  std::sort(out.begin(), out.end());
  return out;
}

SelectionReport compute_mppi(const std::vector<const ParamState*>& draws, double bfdr_alpha) {
  if (draws.empty()) throw std::invalid_argument("compute_mppi: no snapshots");
  const auto t = static_cast<Eigen::Index>(draws[0]->nu.size());
  const auto d = static_cast<Eigen::Index>(draws[0]->lambda.size());
  SelectionReport rep;
  rep.mppi_fixed = Eigen::VectorXd::Zero(t);
  rep.mppi_random = Eigen::VectorXd::Zero(d);
  for (const ParamState* s : draws) {
    for (Eigen::Index k = 0; k < t; ++k) rep.mppi_fixed(k) += s->nu[k];
    for (Eigen::Index k = 0; k < d; ++k) rep.mppi_random(k) += s->lambda[k];
  }
  rep.mppi_fixed /= static_cast<double>(draws.size());
  rep.mppi_random /= static_cast<double>(draws.size());
  rep.median_fixed = median_model(rep.mppi_fixed);
  rep.median_random = median_model(rep.mppi_random);
  rep.bfdr_fixed = bfdr_select(rep.mppi_fixed, bfdr_alpha);
  rep.bfdr_random = bfdr_select(rep.mppi_random, bfdr_alpha);
  return rep;
}

SelectionReport compute_mppi(const PosteriorDraws& draws, double bfdr_alpha) {
  std::vector<const ParamState*> ptrs;
  for (const auto& s : draws.snapshots) ptrs.push_back(&s);
  return compute_mppi(ptrs, bfdr_alpha);
}

double quantile(std::vector<double>& values, double prob) {
  if (values.empty()) throw std::invalid_argument("quantile: empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

CurveBand tve_curves(const std::vector<const ParamState*>& draws, const SplineReparam& reparam, int covariate,
                     const std::vector<double>& grid) {
  if (draws.empty()) throw std::invalid_argument("tve_curves: no snapshots");
  if (covariate < 0 || covariate >= draws[0]->xi.cols()) throw std::out_of_range("tve_curves: covariate");
  const std::size_t g = grid.size();
  std::vector<std::vector<double>> values(g);
  const Eigen::MatrixXd us = reparam.u_star_at(grid);
  for (const ParamState* s : draws) {
    const double bstar = s->beta(term_index(covariate, TermKind::Nonlinear));
    const double blin = s->beta(term_index(covariate, TermKind::Linear));
    const double bmain = s->beta(term_index(covariate, TermKind::Main));
    const Eigen::VectorXd shape = us * s->xi.col(covariate);
    for (std::size_t k = 0; k < g; ++k) {
      const double f = bstar * shape(static_cast<Eigen::Index>(k)) + blin * grid[k] + bmain;
      values[k].push_back(std::exp(f));
    }
  }
  CurveBand out;
  out.grid = grid;
  for (std::size_t k = 0; k < g; ++k) {
    out.lower.push_back(quantile(values[k], 0.025));
    out.median.push_back(quantile(values[k], 0.5));
    out.upper.push_back(quantile(values[k], 0.975));
  }
  return out;
}

std::vector<IntervalSummary> random_effect_variances(const std::vector<const ParamState*>& draws) {
  if (draws.empty()) return {};
  const auto d = draws[0]->kappa.size();
  std::vector<std::vector<double>> values(static_cast<std::size_t>(d));
  for (const ParamState* s : draws) {
    const Eigen::MatrixXd kg = s->kappa.asDiagonal() * s->gamma;
    for (Eigen::Index k = 0; k < d; ++k) values[k].push_back(kg.row(k).squaredNorm());
  }
  std::vector<IntervalSummary> out;
  for (auto& v : values) {
    IntervalSummary sm;
    sm.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    sm.median = quantile(v, 0.5);
    sm.lower = quantile(v, 0.025);
    sm.upper = quantile(v, 0.975);
    out.push_back(sm);
  }
  return out;
}

// ---- partitions

Partition canonical_labels(const Partition& p) {
  std::map<int, int> remap;
  Partition out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto it = remap.find(p[i]);
    if (it == remap.end()) it = remap.emplace(p[i], static_cast<int>(remap.size())).first;
    out[i] = it->second;
  }
  return out;
}

std::vector<Partition> fixed_partition_draws(const std::vector<const ParamState*>& draws,
                                             const std::vector<int>& items) {
  std::vector<Partition> out;
  for (const ParamState* s : draws) {
    Partition p;
    for (int t : items) p.push_back(s->nu.at(t) && s->c_beta.at(t) >= 0 ? s->c_beta[t] + 1 : 0);
    out.push_back(canonical_labels(p));
  }
  return out;
}

std::vector<Partition> random_partition_draws(const std::vector<const ParamState*>& draws) {
  std::vector<Partition> out;
  for (const ParamState* s : draws) {
    Partition p;
    for (std::size_t d = 0; d < s->lambda.size(); ++d) p.push_back(s->lambda[d] && s->c_kappa[d] >= 0 ? s->c_kappa[d] + 1 : 0);
    out.push_back(canonical_labels(p));
  }
  return out;
}

Eigen::MatrixXd coclustering_matrix(const std::vector<Partition>& draws) {
  if (draws.empty()) throw std::invalid_argument("coclustering_matrix: no draws");
  const auto n = static_cast<Eigen::Index>(draws[0].size());
  Eigen::MatrixXd psm = Eigen::MatrixXd::Zero(n, n);
  for (const auto& p : draws) {
    if (static_cast<Eigen::Index>(p.size()) != n) throw std::invalid_argument("coclustering_matrix: ragged draws");
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (p[i] == p[j]) psm(i, j) += 1.0;
  }
  return psm / static_cast<double>(draws.size());
}

namespace {

// Loss restricted to items with a label >= 0.
double partial_loss(const Partition& labels, const Eigen::MatrixXd& psm) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  double loss = 0.0;
  int used = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels[i] < 0) continue;
    ++used;
    double same = 0.0, same_p = 0.0, row_p = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (labels[j] < 0) continue;
      row_p += psm(i, j);
      if (labels[j] == labels[i]) {
        same += 1.0;
        same_p += psm(i, j);
      }
    }
    loss += std::log(same) - 2.0 * std::log(same_p) + std::log(row_p);
  }
  return used > 0 ? loss / static_cast<double>(n) : 0.0;
}

int n_labels(const Partition& p) {
  int k = 0;
  for (int c : p) k = std::max(k, c + 1);
  return k;
}

// Move item i to the label minimizing the loss; returns true if it moved.
bool best_move(Partition& labels, Eigen::Index i, const Eigen::MatrixXd& psm) {
  const int current = labels[i];
  const int k = n_labels(labels);
  int best = current;
  double best_loss = std::numeric_limits<double>::infinity();
  for (int c = 0; c <= k; ++c) {
    labels[i] = c;
    const double l = partial_loss(labels, psm);
    if (l < best_loss - 1e-12) {
      best_loss = l;
      best = c;
    }
  }
  labels[i] = best;
  return best != current;
}

}  // namespace

double vi_lower_bound_loss(const Partition& labels, const Eigen::MatrixXd& psm) {
  if (static_cast<Eigen::Index>(labels.size()) != psm.rows()) throw std::invalid_argument("vi loss: size mismatch");
  return partial_loss(canonical_labels(labels), psm);
}

ClusterEstimate salso_cluster(const std::vector<Partition>& draws, RngStream& rng, int restarts) {
  const Eigen::MatrixXd psm = coclustering_matrix(draws);
  const auto n = static_cast<Eigen::Index>(psm.rows());
  ClusterEstimate best;
  best.expected_loss = std::numeric_limits<double>::infinity();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int r = 0; r < std::max(1, restarts); ++r) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    Partition labels(static_cast<std::size_t>(n), -1);
    for (Eigen::Index i : order) best_move(labels, i, psm);
    for (int sweep = 0; sweep < 100; ++sweep) {
      bool moved = false;
      for (Eigen::Index i : order) {
        moved = best_move(labels, i, psm) || moved;
        labels = canonical_labels(labels);
      }
      if (!moved) break;
    }
    labels = canonical_labels(labels);
    const double loss = partial_loss(labels, psm);
    if (loss < best.expected_loss) {
      best.expected_loss = loss;
      best.labels = labels;
    }
  }
  return best;
}

double variation_of_information(const Partition& a, const Partition& b) {
  if (a.size() != b.size()) throw std::invalid_argument("variation_of_information: item sets differ");
  if (a.empty()) return 0.0;
  const double n = static_cast<double>(a.size());
  std::map<int, double> ca, cb;
  std::map<std::pair<int, int>, double> cab;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca[a[i]] += 1.0;
    cb[b[i]] += 1.0;
    cab[{a[i], b[i]}] += 1.0;
  }
  double vi = 0.0;
  for (const auto& [key, nab] : cab) {
    const double pab = nab / n;
    vi -= pab * (std::log(pab / (ca[key.first] / n)) + std::log(pab / (cb[key.second] / n)));
  }
  return std::max(0.0, vi);
}

// ---- predictive checks

Eigen::MatrixXd loglik_matrix(const Model& model, const std::vector<const ParamState*>& draws) {
  Eigen::MatrixXd ll(static_cast<Eigen::Index>(draws.size()), model.data.n_obs());
  for (std::size_t s = 0; s < draws.size(); ++s)
    ll.row(static_cast<Eigen::Index>(s)) = pointwise_loglik(model, *draws[s]).transpose();
  return ll;
}

double psis_smooth(Eigen::VectorXd& lw) {
  const auto s = lw.size();
  lw.array() -= lw.maxCoeff();
  const auto m = static_cast<Eigen::Index>(std::ceil(0.2 * static_cast<double>(s)));
  if (m < 5 || s - m < 1) return std::numeric_limits<double>::infinity();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(s));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return lw(a) < lw(b); });
  const double cutoff = std::exp(lw(order[static_cast<std::size_t>(s - m - 1)]));
  const double top = std::exp(lw(order.back()));
  std::vector<double> exceed;
  for (Eigen::Index j = s - m; j < s; ++j)
    exceed.push_back(std::max(std::exp(lw(order[static_cast<std::size_t>(j)])) - cutoff, 1e-300));
  GPDFit fit;
  try {
    fit = fit_generalized_pareto(exceed);
  } catch (const std::invalid_argument&) {
    return -std::numeric_limits<double>::infinity();
  }
  if (std::isfinite(fit.k_hat)) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double p = (static_cast<double>(j) + 0.5) / static_cast<double>(m);
      const double w = std::min(cutoff + gpd_quantile(p, fit.k_hat, fit.sigma_hat), top);
      lw(order[static_cast<std::size_t>(s - m + j)]) = std::log(w);
    }
  }
  return fit.k_hat;
}

LooReport psis_loo(const Eigen::MatrixXd& loglik) {
  if (loglik.rows() < 1) throw std::invalid_argument("psis_loo: no draws");
  LooReport rep;
  const auto n = loglik.cols();
  rep.pointwise.resize(n);
  rep.pareto_k.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd ll = loglik.col(i);
    Eigen::VectorXd lw = -ll;
    rep.pareto_k(i) = loglik.rows() > 1 ? psis_smooth(lw) : -std::numeric_limits<double>::infinity();
    if (loglik.rows() == 1) lw.setZero();
    const Eigen::VectorXd num = lw + ll;
    rep.pointwise(i) = log_sum_exp(std::span<const double>(num.data(), static_cast<std::size_t>(num.size()))) -
                       log_sum_exp(std::span<const double>(lw.data(), static_cast<std::size_t>(lw.size())));
    if (rep.pareto_k(i) > 0.7) ++rep.n_high_k;
  }
  rep.elpd = rep.pointwise.sum();
  return rep;
}

namespace {

std::vector<double> ppc_statistics(const Dataset& data, const Eigen::VectorXd& y) {
  std::vector<double> counts;
  for (int i = 0; i < data.n_subjects(); ++i) {
    const int st = data.subject_start[i];
    counts.push_back(y.segment(st, data.subject_start[i + 1] - st).sum());
  }
  std::vector<double> c1 = counts, c2 = counts, c3 = counts;
  return {y.mean(), quantile(c1, 0.1), quantile(c2, 0.5), quantile(c3, 0.9), static_cast<double>(y.size())};
}

}  // namespace

std::vector<PpcResult> posterior_predictive_check(const Model& model, const std::vector<const ParamState*>& draws,
                                                  RngStream& rng) {
  const std::vector<std::string> names = {"event_rate", "subject_count_q10", "subject_count_q50",
                                          "subject_count_q90", "sample_size"};
  const std::vector<double> observed = ppc_statistics(model.data, model.data.y);
  std::vector<double> ge(names.size(), 0.0), le(names.size(), 0.0);
  Eigen::VectorXd yrep(model.data.n_obs());
  for (const ParamState* s : draws) {
    const Eigen::VectorXd psi = compute_psi(model, *s);
    for (Eigen::Index o = 0; o < psi.size(); ++o) yrep(o) = rng.uniform() < 1.0 / (1.0 + std::exp(-psi(o))) ? 1.0 : 0.0;
    const std::vector<double> rep = ppc_statistics(model.data, yrep);
    for (std::size_t k = 0; k < names.size(); ++k) {
      if (rep[k] >= observed[k]) ge[k] += 1.0;
      if (rep[k] <= observed[k]) le[k] += 1.0;
    }
  }
  std::vector<PpcResult> out;
  const double ns = static_cast<double>(std::max<std::size_t>(draws.size(), 1));
  for (std::size_t k = 0; k < names.size(); ++k)
    out.push_back({names[k], observed[k], std::min(1.0, 2.0 * std::min(ge[k], le[k]) / ns)});
  return out;
}

SelectionMetrics selection_metrics(const std::vector<int>& selected, const std::vector<int>& truth) {
  if (selected.size() != truth.size()) throw std::invalid_argument("selection_metrics: length mismatch");
  double tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const bool s = selected[k] != 0, t = truth[k] != 0;
    if (s && t) ++tp;
    else if (s && !t) ++fp;
    else if (!s && t) ++fn;
    else ++tn;
  }
  SelectionMetrics m;
  m.sens = tp + fn > 0 ? tp / (tp + fn) : 1.0;
  m.spec = tn + fp > 0 ? tn / (tn + fp) : 1.0;
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  m.mcc = denom > 0 ? (tp * tn - fp * fn) / std::sqrt(denom) : 0.0;
  return m;
}

}  // namespace tvem
