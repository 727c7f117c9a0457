#include "tvem/updates.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <stdexcept>

#include "tvem/stats.hpp"

namespace tvem {

namespace {

struct SlabPrior {
  bool folded = false;
  double var = 1.0;
  double m0 = 0.0;

  double log_marginal(double a, double b) const {
    return folded ? folded_normal_tilt_log_marginal(a, b, m0, var) : normal_tilt_log_marginal(a, b, var);
  }
  double sample(double a, double b, RngStream& rng) const {
    return folded ? sample_folded_normal_tilt(a, b, m0, var, rng) : sample_normal_tilt(a, b, var, rng);
  }
};

// Occupancy and shared value of each cluster label.
class ClusterTable {
 public:
  ClusterTable(const std::vector<int>& labels, const Eigen::VectorXd& values) {
    for (std::size_t t = 0; t < labels.size(); ++t) {
      const int c = labels[t];
      if (c < 0) continue;
      if (c >= static_cast<int>(count_.size())) {
        count_.resize(c + 1, 0);
        value_.resize(c + 1, 0.0);
      }
      ++count_[c];
      value_[c] = values(static_cast<Eigen::Index>(t));
    }
  }

  int open(double v) {
    for (std::size_t c = 0; c < count_.size(); ++c) {
      if (count_[c] == 0) {
        count_[c] = 1;
        value_[c] = v;
        return static_cast<int>(c);
      }
    }
    count_.push_back(1);
    value_.push_back(v);
    return static_cast<int>(count_.size()) - 1;
  }
  void join(int c) { ++count_[c]; }
  void leave(int c) { --count_[c]; }
  int size() const { return static_cast<int>(count_.size()); }
  int count(int c) const { return count_[c]; }
  double value(int c) const { return value_[c]; }
  void set_value(int c, double v) { value_[c] = v; }
  int n_members() const {
    int n = 0;
    for (int c : count_) n += c;
    return n;
  }

 private:
  std::vector<int> count_;
  std::vector<double> value_;
};

// Candidate allocations of one item: every occupied cluster plus a new one
// (label -1) weighted per Neal's algorithm 2.
struct Allocation {
  std::vector<double> log_weight;
  std::vector<int> label;
};

Allocation allocation_weights(const ClusterTable& table, const GaussianPseudoLik& pl, double conc,
                              const SlabPrior& prior) {
  Allocation out;
  for (int c = 0; c < table.size(); ++c) {
    if (table.count(c) == 0) continue;
    const double v = table.value(c);
    out.log_weight.push_back(std::log(static_cast<double>(table.count(c))) - 0.5 * pl.a * v * v + pl.b * v);
    out.label.push_back(c);
  }
  out.log_weight.push_back(std::log(conc) + prior.log_marginal(pl.a, pl.b));
  out.label.push_back(-1);
  return out;
}

// A family of scalar coefficients sharing one spike-and-slab (or spiked DP)
// prior: the fixed-effect betas or the random-effect scales kappa.
struct Family {
  Eigen::VectorXd* values = nullptr;
  std::vector<int>* included = nullptr;
  std::vector<int>* labels = nullptr;
  const std::vector<TermMode>* modes = nullptr;
  std::vector<bool> dp_item;
  SlabPrior prior;
  double conc = 1.0;
  double a_incl = 1.0;
  double b_incl = 1.0;
  std::function<Eigen::VectorXd(int)> design;
  // kappa only: activate / deactivate dependent Gamma entries
  std::function<void(int)> before_add;
  std::function<void(int)> undo_add;
  std::function<void(int)> after_delete;

  int size() const { return static_cast<int>(values->size()); }
  bool selectable(int t) const { return (*modes)[t] == TermMode::Selectable; }
};

void apply_change(ParamState& s, const Eigen::VectorXd& design, double delta) {
  if (delta != 0.0) s.psi.noalias() += delta * design;
}

void compact_labels(std::vector<int>& labels) {
  std::vector<int> remap;
  int next = 0;
  for (int& c : labels) {
    if (c < 0) continue;
    if (c >= static_cast<int>(remap.size())) remap.resize(c + 1, -1);
    if (remap[c] < 0) remap[c] = next++;
    c = remap[c];
  }
}

void redraw_cluster_values(const Model& model, ParamState& s, Family& fam, RngStream& rng) {
  std::vector<int>& labels = *fam.labels;
  int n_labels = 0;
  for (int c : labels) n_labels = std::max(n_labels, c + 1);
  for (int c = 0; c < n_labels; ++c) {
    Eigen::VectorXd combined = Eigen::VectorXd::Zero(model.data.n_obs());
    double current = 0.0;
    bool any = false;
    for (int t = 0; t < fam.size(); ++t) {
      if (labels[t] != c) continue;
      combined += fam.design(t);
      current = (*fam.values)(t);
      any = true;
    }
    if (!any) continue;
    const GaussianPseudoLik pl = pseudo_lik_from_column(model, s, combined, current);
    const double v = fam.prior.sample(pl.a, pl.b, rng);
    for (int t = 0; t < fam.size(); ++t)
      if (labels[t] == c) (*fam.values)(t) = v;
    apply_change(s, combined, v - current);
  }
}

void reassign_clusters(const Model& model, ParamState& s, Family& fam, RngStream& rng) {
  std::vector<int>& labels = *fam.labels;
  ClusterTable table(labels, *fam.values);
  for (int t = 0; t < fam.size(); ++t) {
    if (!fam.dp_item[t] || !(*fam.included)[t]) continue;
    const Eigen::VectorXd d = fam.design(t);
    const double current = (*fam.values)(t);
    const GaussianPseudoLik pl = pseudo_lik_from_column(model, s, d, current);
    table.leave(labels[t]);
    const Allocation alloc = allocation_weights(table, pl, fam.conc, fam.prior);
    const std::size_t k = rng.categorical_log(alloc.log_weight);
    double v;
    int lab = alloc.label[k];
    if (lab >= 0) {
      v = table.value(lab);
      table.join(lab);
    } else {
      v = fam.prior.sample(pl.a, pl.b, rng);
      lab = table.open(v);
    }
    labels[t] = lab;
    (*fam.values)(t) = v;
    apply_change(s, d, v - current);
  }
  compact_labels(labels);
  redraw_cluster_values(model, s, fam, rng);
}

void between_step(const Model& model, ParamState& s, Family& fam, RngStream& rng) {
  std::vector<int>& inc = *fam.included;
  std::vector<int>& labels = *fam.labels;
  int n_sel = 0, n_sel_in = 0;
  for (int t = 0; t < fam.size(); ++t) {
    if (!fam.selectable(t)) continue;
    ++n_sel;
    n_sel_in += inc[t];
  }
  for (int t = 0; t < fam.size(); ++t) {
    if (!fam.selectable(t)) continue;
    const int others_in = n_sel_in - inc[t];
    const int others_out = (n_sel - 1) - others_in;
    const double log_odds = std::log(inclusion_prior_odds(fam.a_incl, fam.b_incl, others_in, others_out));

    if (!inc[t]) {
      if (fam.before_add) fam.before_add(t);
      const Eigen::VectorXd d = fam.design(t);
      const GaussianPseudoLik pl = pseudo_lik_from_column(model, s, d, 0.0);
      double v;
      int lab = -1;
      if (fam.dp_item[t]) {
        ClusterTable table(labels, *fam.values);
        const Allocation alloc = allocation_weights(table, pl, fam.conc, fam.prior);
        const double log_r =
            log_odds + log_sum_exp(alloc.log_weight) - std::log(table.n_members() + fam.conc);
        if (std::log(rng.uniform()) >= log_r) {
          if (fam.undo_add) fam.undo_add(t);
          continue;
        }
        const std::size_t k = rng.categorical_log(alloc.log_weight);
        lab = alloc.label[k];
        if (lab >= 0) {
          v = table.value(lab);
        } else {
          v = fam.prior.sample(pl.a, pl.b, rng);
          lab = std::numeric_limits<int>::max();  // relabelled below
        }
      } else {
        const double log_r = log_odds + fam.prior.log_marginal(pl.a, pl.b);
        if (std::log(rng.uniform()) >= log_r) {
          if (fam.undo_add) fam.undo_add(t);
          continue;
        }
        v = fam.prior.sample(pl.a, pl.b, rng);
      }
      inc[t] = 1;
      ++n_sel_in;
      (*fam.values)(t) = v;
      if (fam.dp_item[t]) {
        if (lab == std::numeric_limits<int>::max()) {
          int mx = -1;
          for (int c : labels) mx = std::max(mx, c);
          lab = mx + 1;
        }
        labels[t] = lab;
      }
      apply_change(s, d, v);
    } else {
      const Eigen::VectorXd d = fam.design(t);
      const double current = (*fam.values)(t);
      const GaussianPseudoLik pl = pseudo_lik_from_column(model, s, d, current);
      double log_r;
      if (fam.dp_item[t]) {
        ClusterTable table(labels, *fam.values);
        table.leave(labels[t]);
        const Allocation alloc = allocation_weights(table, pl, fam.conc, fam.prior);
        log_r = log_odds + log_sum_exp(alloc.log_weight) - std::log(table.n_members() + fam.conc);
      } else {
        log_r = log_odds + fam.prior.log_marginal(pl.a, pl.b);
      }
      if (std::log(rng.uniform()) >= -log_r) continue;
      inc[t] = 0;
      --n_sel_in;
      (*fam.values)(t) = 0.0;
      if (fam.dp_item[t]) labels[t] = -1;
      apply_change(s, d, -current);
      if (fam.after_delete) fam.after_delete(t);
    }
  }
  if (labels.size() > 0) compact_labels(labels);
}

void within_step(const Model& model, ParamState& s, Family& fam, RngStream& rng) {
  for (int t = 0; t < fam.size(); ++t) {
    if (!(*fam.included)[t] || fam.dp_item[t]) continue;
    const Eigen::VectorXd d = fam.design(t);
    const double current = (*fam.values)(t);
    const GaussianPseudoLik pl = pseudo_lik_from_column(model, s, d, current);
    const double v = fam.prior.sample(pl.a, pl.b, rng);
    (*fam.values)(t) = v;
    apply_change(s, d, v - current);
  }
  bool any_dp = false;
  for (int t = 0; t < fam.size(); ++t) any_dp = any_dp || (fam.dp_item[t] && (*fam.included)[t]);
  if (any_dp) redraw_cluster_values(model, s, fam, rng);
}

Family fixed_family(const Model& model, ParamState& s) {
  Family fam;
  fam.values = &s.beta;
  fam.included = &s.nu;
  fam.labels = &s.c_beta;
  fam.modes = &model.layout.fixed_modes;
  fam.dp_item = model.layout.dp_item;
  fam.prior = {false, model.hp.tau2, 0.0};
  fam.conc = s.vartheta;
  fam.a_incl = model.hp.a_nu;
  fam.b_incl = model.hp.b_nu;
  fam.design = [&model, &s](int t) { return fixed_design_column(model, s, t); };
  return fam;
}

// Draw the Gamma entries that become free when effect d enters, from their
// prior conditional on the entries already free.
std::vector<int> activate_gamma_entries(const Model& model, ParamState& s, int d, RngStream& rng) {
  const int dim = model.layout.n_random;
  std::vector<int> fresh, held;
  for (int r = 1; r < dim; ++r) {
    for (int l = 0; l < r; ++l) {
      const bool now_free = gamma_entry_free(s, r, l);
      const bool will_free = now_free || (r == d && s.lambda[l]) || (l == d && s.lambda[r]);
      if (now_free) held.push_back(gamma_entry(r, l));
      else if (will_free) fresh.push_back(gamma_entry(r, l));
    }
  }
  if (fresh.empty()) return fresh;
  const Eigen::VectorXd& m0 = model.layout.gamma0;
  const Eigen::MatrixXd& v = model.layout.V_gamma;
  const auto nf = static_cast<Eigen::Index>(fresh.size());
  const auto nh = static_cast<Eigen::Index>(held.size());
  Eigen::MatrixXd v_ff(nf, nf), v_fh(nf, nh), v_hh(nh, nh);
  Eigen::VectorXd mean_f(nf), dev_h(nh);
  for (Eigen::Index i = 0; i < nf; ++i) {
    mean_f(i) = m0(fresh[i]);
    for (Eigen::Index j = 0; j < nf; ++j) v_ff(i, j) = v(fresh[i], fresh[j]);
    for (Eigen::Index j = 0; j < nh; ++j) v_fh(i, j) = v(fresh[i], held[j]);
  }
  for (Eigen::Index i = 0; i < nh; ++i) {
    for (Eigen::Index j = 0; j < nh; ++j) v_hh(i, j) = v(held[i], held[j]);
  }
  // gamma value lookup by entry index
  auto entry_value = [&](int e) {
    int r = 1;
    while (gamma_entry(r + 1, 0) <= e) ++r;
    return s.gamma(r, e - gamma_entry(r, 0));
  };
  for (Eigen::Index j = 0; j < nh; ++j) dev_h(j) = entry_value(held[j]) - m0(held[j]);
  Eigen::VectorXd cond_mean = mean_f;
  Eigen::MatrixXd cond_cov = v_ff;
  if (nh > 0 && !v_fh.isZero(0.0)) {
    Eigen::LDLT<Eigen::MatrixXd> solver(v_hh);
    cond_mean += v_fh * solver.solve(dev_h);
    cond_cov -= v_fh * solver.solve(v_fh.transpose());
  }
  Eigen::LLT<Eigen::MatrixXd> chol(cond_cov);
  Eigen::VectorXd e(nf);
  for (Eigen::Index i = 0; i < nf; ++i) e(i) = rng.normal();
  const Eigen::VectorXd draw = cond_mean + chol.matrixL() * e;
  for (Eigen::Index i = 0; i < nf; ++i) {
    const int idx = fresh[i];
    int r = 1;
    while (gamma_entry(r + 1, 0) <= idx) ++r;
    s.gamma(r, idx - gamma_entry(r, 0)) = draw(i);
  }
  return fresh;
}

void zero_inactive_gamma(ParamState& s) {
  const auto dim = static_cast<int>(s.gamma.rows());
  for (int r = 1; r < dim; ++r)
    for (int l = 0; l < r; ++l)
      if (!gamma_entry_free(s, r, l)) s.gamma(r, l) = 0.0;
}

Family random_family(const Model& model, ParamState& s, RngStream& rng, std::vector<int>& fresh) {
  Family fam;
  fam.values = &s.kappa;
  fam.included = &s.lambda;
  fam.labels = &s.c_kappa;
  fam.modes = &model.layout.random_modes;
  fam.dp_item.assign(model.layout.n_random, model.hp.dp_random);
  for (int d = 0; d < model.layout.n_random; ++d)
    if (model.layout.random_modes[d] == TermMode::Absent) fam.dp_item[d] = false;
  fam.prior = {true, model.hp.v0, model.hp.m0};
  fam.conc = s.a_conc;
  fam.a_incl = model.hp.a_lambda;
  fam.b_incl = model.hp.b_lambda;
  fam.design = [&model, &s](int d) { return kappa_design_column(model, s, d); };
  fam.before_add = [&model, &s, &rng, &fresh](int d) { fresh = activate_gamma_entries(model, s, d, rng); };
  fam.undo_add = [&s, &fresh](int) {
    for (int idx : fresh) {
      int r = 1;
      while (gamma_entry(r + 1, 0) <= idx) ++r;
      s.gamma(r, idx - gamma_entry(r, 0)) = 0.0;
    }
    fresh.clear();
  };
  fam.after_delete = [&s](int) { zero_inactive_gamma(s); };
  return fam;
}

// z_o (K Gamma zeta_i) for every observation.
Eigen::VectorXd random_part(const Model& model, const ParamState& s) {
  const Dataset& data = model.data;
  Eigen::VectorXd out(data.n_obs());
  const Eigen::MatrixXd alpha = s.kappa.asDiagonal() * (s.gamma * s.zeta);
  for (int i = 0; i < data.n_subjects(); ++i) {
    const int st = data.subject_start[i];
    const int len = data.subject_start[i + 1] - st;
    out.segment(st, len) = data.z.middleRows(st, len) * alpha.col(i);
  }
  return out;
}

// PG-augmented log-likelihood with every zeta_i ~ N(0, I) integrated out, up to
// terms free of (kappa, Gamma). Depends on K Gamma only through the included
// rows A, via A A' = L L'.
class ZetaMarginal {
 public:
  ZetaMarginal(const Model& model, const ParamState& s, const Eigen::VectorXd& psi_fixed) {
    const Dataset& data = model.data;
    const Eigen::VectorXd resid = model.kappa_obs - s.omega.cwiseProduct(psi_fixed);
    for (int i = 0; i < data.n_subjects(); ++i) {
      const int st = data.subject_start[i];
      const int len = data.subject_start[i + 1] - st;
      const auto zi = data.z.middleRows(st, len);
      s_.push_back(zi.transpose() * s.omega.segment(st, len).asDiagonal() * zi);
      h_.push_back(zi.transpose() * resid.segment(st, len));
    }
  }

  double operator()(const ParamState& s) const {
    std::vector<int> act;
    for (int d = 0; d < s.kappa.size(); ++d)
      if (s.kappa(d) != 0.0) act.push_back(d);
    const auto m = static_cast<Eigen::Index>(act.size());
    if (m == 0) return 0.0;
    Eigen::MatrixXd a(m, s.gamma.cols());
    for (Eigen::Index r = 0; r < m; ++r) a.row(r) = s.kappa(act[r]) * s.gamma.row(act[r]);
    Eigen::LLT<Eigen::MatrixXd> sig(a * a.transpose());
    if (sig.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const Eigen::MatrixXd l = sig.matrixL();
    double total = 0.0;
    Eigen::MatrixXd sa(m, m);
    Eigen::VectorXd ha(m);
    for (std::size_t i = 0; i < s_.size(); ++i) {
      for (Eigen::Index r = 0; r < m; ++r) {
        ha(r) = h_[i](act[r]);
        for (Eigen::Index c = 0; c < m; ++c) sa(r, c) = s_[i](act[r], act[c]);
      }
      Eigen::MatrixXd mm = l.transpose() * sa * l;
      mm.diagonal().array() += 1.0;
      Eigen::LLT<Eigen::MatrixXd> ch(mm);
      const Eigen::VectorXd v = ch.matrixL().solve(l.transpose() * ha);
      total += -ch.matrixLLT().diagonal().array().log().sum() + 0.5 * v.squaredNorm();
    }
    return total;
  }

 private:
  std::vector<Eigen::MatrixXd> s_;
  std::vector<Eigen::VectorXd> h_;
};

// log N(gamma_F; gamma0_F, V_FF) over the currently free entries
double gamma_log_prior(const Model& model, const ParamState& s) {
  std::vector<int> idx;
  std::vector<double> val;
  const auto dim = static_cast<int>(s.gamma.rows());
  for (int r = 1; r < dim; ++r)
    for (int l = 0; l < r; ++l)
      if (gamma_entry_free(s, r, l)) {
        idx.push_back(gamma_entry(r, l));
        val.push_back(s.gamma(r, l));
      }
  const auto n = static_cast<Eigen::Index>(idx.size());
  if (n == 0) return 0.0;
  Eigen::MatrixXd v(n, n);
  Eigen::VectorXd dev(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    dev(i) = val[i] - model.layout.gamma0(idx[i]);
    for (Eigen::Index j = 0; j < n; ++j) v(i, j) = model.layout.V_gamma(idx[i], idx[j]);
  }
  Eigen::LLT<Eigen::MatrixXd> ch(v);
  const Eigen::VectorXd w = ch.matrixL().solve(dev);
  return -ch.matrixLLT().diagonal().array().log().sum() - 0.5 * w.squaredNorm();
}

// Included effect a hands its scale, cluster label and Gamma entries to excluded
// effect b. The map is its own inverse with unit Jacobian, so only the
// likelihood and the Gamma prior enter the ratio.
void swap_step(const Model& model, ParamState& s, const ZetaMarginal& marginal, double& current, RngStream& rng) {
  std::vector<int> in, out;
  for (int d = 0; d < model.layout.n_random; ++d) {
    if (model.layout.random_modes[d] != TermMode::Selectable) continue;
    (s.lambda[d] ? in : out).push_back(d);
  }
  if (in.empty() || out.empty()) return;
  const int a = in[rng.uniform_index(in.size())];
  const int b = out[rng.uniform_index(out.size())];
  const std::vector<int> lambda0 = s.lambda, labels0 = s.c_kappa;
  const Eigen::VectorXd kappa0 = s.kappa;
  const Eigen::MatrixXd gamma0 = s.gamma;
  const double prior_cur = gamma_log_prior(model, s);
  auto at = [&s](int r, int l) -> double& { return r > l ? s.gamma(r, l) : s.gamma(l, r); };
  for (int l = 0; l < model.layout.n_random; ++l) {
    if (l == a || l == b || !s.lambda[l]) continue;
    at(b, l) = at(a, l);
    at(a, l) = 0.0;
  }
  s.lambda[b] = 1;
  s.lambda[a] = 0;
  s.kappa(b) = s.kappa(a);
  s.kappa(a) = 0.0;
  s.c_kappa[b] = s.c_kappa[a];
  s.c_kappa[a] = -1;
  const double proposed = marginal(s);
  if (std::log(rng.uniform()) < proposed - current + gamma_log_prior(model, s) - prior_cur) {
    current = proposed;
  } else {
    s.lambda = lambda0;
    s.kappa = kappa0;
    s.c_kappa = labels0;
    s.gamma = gamma0;
  }
}

// Add/delete of each selectable random effect with zeta integrated out. New
// scales come from the slab (or the urn under the DP), so the ratio is the
// marginal likelihood ratio times the inclusion prior odds. Leaves psi holding
// the fixed part only; the caller redraws zeta.
void random_between_step(const Model& model, ParamState& s, Family& fam, const Eigen::VectorXd& psi_fixed,
                         RngStream& rng) {
  const ZetaMarginal marginal(model, s, psi_fixed);
  std::vector<int>& inc = s.lambda;
  std::vector<int>& labels = s.c_kappa;
  int n_sel = 0, n_sel_in = 0;
  for (int d = 0; d < fam.size(); ++d) {
    if (!fam.selectable(d)) continue;
    ++n_sel;
    n_sel_in += inc[d];
  }
  double current = marginal(s);
  for (int d = 0; d < fam.size(); ++d) {
    if (!fam.selectable(d)) continue;
    const int others_in = n_sel_in - inc[d];
    const int others_out = (n_sel - 1) - others_in;
    const double log_odds = std::log(inclusion_prior_odds(fam.a_incl, fam.b_incl, others_in, others_out));
    if (!inc[d]) {
      fam.before_add(d);
      int lab = -1;
      double v;
      if (fam.dp_item[d]) {
        ClusterTable table(labels, s.kappa);
        std::vector<double> lw;
        std::vector<int> cand;
        for (int c = 0; c < table.size(); ++c) {
          if (table.count(c) == 0) continue;
          lw.push_back(std::log(static_cast<double>(table.count(c))));
          cand.push_back(c);
        }
        lw.push_back(std::log(fam.conc));
        cand.push_back(-1);
        lab = cand[rng.categorical_log(lw)];
        v = lab >= 0 ? table.value(lab) : sample_folded_normal(fam.prior.m0, fam.prior.var, rng);
      } else {
        v = sample_folded_normal(fam.prior.m0, fam.prior.var, rng);
      }
      inc[d] = 1;
      s.kappa(d) = v;
      const double proposed = marginal(s);
      if (std::log(rng.uniform()) < log_odds + proposed - current) {
        current = proposed;
        ++n_sel_in;
        if (fam.dp_item[d]) {
          if (lab < 0) {
            for (int c : labels) lab = std::max(lab, c);
            ++lab;
          }
          labels[d] = lab;
        }
      } else {
        inc[d] = 0;
        s.kappa(d) = 0.0;
        fam.undo_add(d);
      }
    } else {
      const double v = s.kappa(d);
      const Eigen::MatrixXd gamma_saved = s.gamma;
      inc[d] = 0;
      s.kappa(d) = 0.0;
      zero_inactive_gamma(s);
      const double proposed = marginal(s);
      if (std::log(rng.uniform()) < -(log_odds + current - proposed)) {
        current = proposed;
        --n_sel_in;
        if (fam.dp_item[d]) labels[d] = -1;
      } else {
        inc[d] = 1;
        s.kappa(d) = v;
        s.gamma = gamma_saved;
      }
    }
  }
  swap_step(model, s, marginal, current, rng);
  if (!labels.empty()) compact_labels(labels);
}

Eigen::VectorXd standard_normal_vector(Eigen::Index n, RngStream& rng) {
  Eigen::VectorXd e(n);
  for (Eigen::Index i = 0; i < n; ++i) e(i) = rng.normal();
  return e;
}

// Draw from N(Q^-1 rhs, Q^-1).
Eigen::VectorXd sample_canonical_normal(const Eigen::MatrixXd& precision, const Eigen::VectorXd& rhs,
                                        RngStream& rng) {
  Eigen::LLT<Eigen::MatrixXd> chol(precision);
  if (chol.info() != Eigen::Success) {
    Eigen::MatrixXd jittered = precision;
    jittered.diagonal().array() += 1e-10 * (1.0 + precision.diagonal().cwiseAbs().maxCoeff());
    chol.compute(jittered);
    if (chol.info() != Eigen::Success) throw std::runtime_error("conjugate draw: precision not positive definite");
  }
  const Eigen::VectorXd mean = chol.solve(rhs);
  const Eigen::VectorXd e = standard_normal_vector(rhs.size(), rng);
  return mean + chol.matrixU().solve(e);
}

}  // namespace

GaussianPseudoLik pseudo_lik_from_column(const Model& model, const ParamState& s, const Eigen::VectorXd& design,
                                         double current) {
  const Eigen::ArrayXd wd = s.omega.array() * design.array();
  const double a = (wd * design.array()).sum();
  const double b = (design.array() * model.kappa_obs.array()).sum() - (wd * s.psi.array()).sum() + current * a;
  return {a, b};
}

GaussianPseudoLik pseudo_lik_for_coef(const Model& model, const ParamState& state, CoefficientId which) {
  if (which.family == CoefficientFamily::Fixed) {
    if (which.index < 0 || which.index >= model.layout.n_terms) throw std::out_of_range("pseudo_lik_for_coef");
    return pseudo_lik_from_column(model, state, fixed_design_column(model, state, which.index),
                                  state.beta(which.index));
  }
  if (which.index < 0 || which.index >= model.layout.n_random) throw std::out_of_range("pseudo_lik_for_coef");
  return pseudo_lik_from_column(model, state, kappa_design_column(model, state, which.index),
                                state.kappa(which.index));
}

double inclusion_prior_odds(double a, double b, int n_included_others, int n_excluded_others) {
  return (a + n_included_others) / (b + n_excluded_others);
}

void update_omega(const Model& model, ParamState& s, RngStream& rng) {
  (void)model;
  for (Eigen::Index o = 0; o < s.psi.size(); ++o) s.omega(o) = sample_polya_gamma(1, s.psi(o), rng);
}

void update_beta_clusters(const Model& model, ParamState& s, RngStream& rng) {
  if (!model.hp.dp_fixed) return;
  Family fam = fixed_family(model, s);
  reassign_clusters(model, s, fam, rng);
}

void update_beta_nu(const Model& model, ParamState& s, RngStream& rng) {
  Family fam = fixed_family(model, s);
  between_step(model, s, fam, rng);
  within_step(model, s, fam, rng);
}

void update_xi_and_rescale(const Model& model, ParamState& s, RngStream& rng) {
  const int r = model.layout.rank;
  const Eigen::MatrixXd& us = model.spline.u_star;
  for (int p = 0; p < model.layout.n_fixed; ++p) {
    const int t = term_index(p, TermKind::Nonlinear);
    const double bstar = s.beta(t);
    if (bstar == 0.0) {
      s.xi.col(p) = s.mu.col(p) + standard_normal_vector(r, rng);
      continue;
    }
    const Eigen::VectorXd xcol = model.data.x.col(p);
    const Eigen::VectorXd old_contrib = bstar * (us * s.xi.col(p)).cwiseProduct(xcol);
    // rows g_o = bstar x_op U*_o
    const Eigen::VectorXd scale = bstar * xcol;
    const Eigen::VectorXd w = s.omega.cwiseProduct(scale.cwiseAbs2());
    Eigen::MatrixXd precision = Eigen::MatrixXd::Identity(r, r);
    precision.noalias() += us.transpose() * w.asDiagonal() * us;
    const Eigen::VectorXd resid =
        model.kappa_obs - s.omega.cwiseProduct(s.psi - old_contrib);  // k - omega psi_rest
    const Eigen::VectorXd rhs = s.mu.col(p) + us.transpose() * scale.cwiseProduct(resid);
    s.xi.col(p) = sample_canonical_normal(precision, rhs, rng);
    s.psi += bstar * (us * s.xi.col(p)).cwiseProduct(xcol) - old_contrib;
  }
  rescale_xi(model, s);
}

double mu_plus_probability(double xi) { return 1.0 / (1.0 + std::exp(-2.0 * xi)); }

void update_mu(ParamState& s, RngStream& rng) {
  for (Eigen::Index p = 0; p < s.xi.cols(); ++p)
    for (Eigen::Index r = 0; r < s.xi.rows(); ++r)
      s.mu(r, p) = rng.uniform() < mu_plus_probability(s.xi(r, p)) ? 1.0 : -1.0;
}

double update_concentration(double current, int n_items, int n_clusters, double a, double b, RngStream& rng) {
  if (n_items <= 0) return rng.gamma(a, b);
  if (n_clusters < 1) throw std::invalid_argument("update_concentration: need at least one cluster");
  const double eta = rng.beta(current + 1.0, static_cast<double>(n_items));
  const double rate = b - std::log(eta);
  const double odds = (a + n_clusters - 1.0) / (n_items * rate);
  const double pi = odds / (1.0 + odds);
  const double shape = rng.uniform() < pi ? a + n_clusters : a + n_clusters - 1.0;
  return rng.gamma(shape, rate);
}

ClusterCounts beta_cluster_counts(const Model& model, const ParamState& s) {
  ClusterCounts out;
  std::set<int> labels;
  for (int t = 0; t < model.layout.n_terms; ++t) {
    if (!model.layout.dp_item[t] || !s.nu[t]) continue;
    ++out.n_items;
    labels.insert(s.c_beta[t]);
  }
  out.n_clusters = static_cast<int>(labels.size());
  return out;
}

ClusterCounts kappa_cluster_counts(const Model& model, const ParamState& s) {
  ClusterCounts out;
  std::set<int> labels;
  for (int d = 0; d < model.layout.n_random; ++d) {
    if (!s.lambda[d] || s.c_kappa[d] < 0) continue;
    ++out.n_items;
    labels.insert(s.c_kappa[d]);
  }
  out.n_clusters = static_cast<int>(labels.size());
  return out;
}

void update_vartheta(const Model& model, ParamState& s, RngStream& rng) {
  if (!model.hp.dp_fixed) return;
  const ClusterCounts c = beta_cluster_counts(model, s);
  s.vartheta = update_concentration(s.vartheta, c.n_items, c.n_clusters, model.hp.a_theta, model.hp.b_theta, rng);
}

void update_a_conc(const Model& model, ParamState& s, RngStream& rng) {
  if (!model.hp.dp_random) return;
  const ClusterCounts c = kappa_cluster_counts(model, s);
  s.a_conc = update_concentration(s.a_conc, c.n_items, c.n_clusters, model.hp.a_A, model.hp.b_A, rng);
}

void update_kappa_clusters(const Model& model, ParamState& s, RngStream& rng) {
  if (!model.hp.dp_random || model.layout.n_random == 0) return;
  std::vector<int> fresh;
  Family fam = random_family(model, s, rng, fresh);
  reassign_clusters(model, s, fam, rng);
}

void update_kappa_lambda(const Model& model, ParamState& s, RngStream& rng) {
  if (model.layout.n_random == 0) return;
  std::vector<int> fresh;
  Family fam = random_family(model, s, rng, fresh);
  const Eigen::VectorXd psi_fixed = s.psi - random_part(model, s);
  random_between_step(model, s, fam, psi_fixed, rng);
  s.psi = psi_fixed + random_part(model, s);
  update_zeta(model, s, rng);
  within_step(model, s, fam, rng);
}

bool gamma_entry_free(const ParamState& s, int d, int l) { return s.lambda[d] && s.lambda[l]; }

void update_gamma(const Model& model, ParamState& s, RngStream& rng) {
  const int dim = model.layout.n_random;
  if (dim < 2) return;
  const Dataset& data = model.data;
  std::vector<std::pair<int, int>> free;  // (row, col)
  for (int r = 1; r < dim; ++r)
    for (int l = 0; l < r; ++l) {
      if (gamma_entry_free(s, r, l)) free.emplace_back(r, l);
      else s.gamma(r, l) = 0.0;
    }
  if (free.empty()) return;
  const auto nf = static_cast<Eigen::Index>(free.size());

  // prior N(gamma0_A, V_AA) on the free block
  Eigen::MatrixXd v_aa(nf, nf);
  Eigen::VectorXd m_a(nf);
  for (Eigen::Index i = 0; i < nf; ++i) {
    const int ei = gamma_entry(free[i].first, free[i].second);
    m_a(i) = model.layout.gamma0(ei);
    for (Eigen::Index j = 0; j < nf; ++j) v_aa(i, j) = model.layout.V_gamma(ei, gamma_entry(free[j].first, free[j].second));
  }
  Eigen::MatrixXd precision;
  if (v_aa.isDiagonal(0.0)) {
    precision = v_aa.diagonal().cwiseInverse().asDiagonal();
  } else {
    precision = v_aa.llt().solve(Eigen::MatrixXd::Identity(nf, nf));
  }
  Eigen::VectorXd rhs = precision * m_a;

  // entries in rows of included effects carry likelihood information
  std::vector<Eigen::Index> lik;
  for (Eigen::Index i = 0; i < nf; ++i)
    if (s.kappa(free[i].first) != 0.0) lik.push_back(i);
  const auto nl = static_cast<Eigen::Index>(lik.size());
  // remove current Gamma contribution, then accumulate per-subject blocks
  const Eigen::MatrixXd alpha_old = s.kappa.asDiagonal() * (s.gamma * s.zeta);
  Eigen::MatrixXd gamma_unit = Eigen::MatrixXd::Identity(dim, dim);
  for (Eigen::Index i = 0; i < nf; ++i)
    if (s.kappa(free[i].first) == 0.0) gamma_unit(free[i].first, free[i].second) = s.gamma(free[i].first, free[i].second);
  const Eigen::MatrixXd alpha_rest = s.kappa.asDiagonal() * (gamma_unit * s.zeta);
  Eigen::VectorXd psi_rest = s.psi;
  for (int i = 0; i < data.n_subjects(); ++i) {
    const int st = data.subject_start[i];
    const int len = data.subject_start[i + 1] - st;
    psi_rest.segment(st, len) -= data.z.middleRows(st, len) * (alpha_old.col(i) - alpha_rest.col(i));
  }
  if (nl > 0) {
    const Eigen::VectorXd resid = model.kappa_obs - s.omega.cwiseProduct(psi_rest);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(nl, nl);
    Eigen::VectorXd score = Eigen::VectorXd::Zero(nl);
    for (int i = 0; i < data.n_subjects(); ++i) {
      const int st = data.subject_start[i];
      const int len = data.subject_start[i + 1] - st;
      const auto zi = data.z.middleRows(st, len);
      const Eigen::MatrixXd wz = s.omega.segment(st, len).asDiagonal() * zi;
      const Eigen::MatrixXd si = zi.transpose() * wz;  // D x D
      const Eigen::VectorXd hi = zi.transpose() * resid.segment(st, len);
      for (Eigen::Index a = 0; a < nl; ++a) {
        const auto [ra, la] = free[lik[a]];
        const double ga = s.kappa(ra) * s.zeta(la, i);
        score(a) += ga * hi(ra);
        for (Eigen::Index b = 0; b <= a; ++b) {
          const auto [rb, lb] = free[lik[b]];
          info(a, b) += ga * s.kappa(rb) * s.zeta(lb, i) * si(ra, rb);
        }
      }
    }
    for (Eigen::Index a = 0; a < nl; ++a) {
      rhs(lik[a]) += score(a);
      for (Eigen::Index b = 0; b <= a; ++b) {
        precision(lik[a], lik[b]) += info(a, b);
        if (b != a) precision(lik[b], lik[a]) += info(a, b);
      }
    }
  }
  const Eigen::VectorXd draw = sample_canonical_normal(precision, rhs, rng);
  for (Eigen::Index i = 0; i < nf; ++i) s.gamma(free[i].first, free[i].second) = draw(i);
  const Eigen::MatrixXd alpha_new = s.kappa.asDiagonal() * (s.gamma * s.zeta);
  for (int i = 0; i < data.n_subjects(); ++i) {
    const int st = data.subject_start[i];
    const int len = data.subject_start[i + 1] - st;
    s.psi.segment(st, len) = psi_rest.segment(st, len) + data.z.middleRows(st, len) * (alpha_new.col(i) - alpha_rest.col(i));
  }
}

void update_zeta(const Model& model, ParamState& s, RngStream& rng) {
  const int dim = model.layout.n_random;
  if (dim == 0) return;
  const Dataset& data = model.data;
  std::vector<int> active;
  for (int d = 0; d < dim; ++d)
    if (s.kappa(d) != 0.0) active.push_back(d);
  const auto na = static_cast<Eigen::Index>(active.size());
  // rows of K Gamma for included effects
  Eigen::MatrixXd kg(na, dim);
  for (Eigen::Index a = 0; a < na; ++a) kg.row(a) = s.kappa(active[a]) * s.gamma.row(active[a]);
  for (int i = 0; i < data.n_subjects(); ++i) {
    if (na == 0) {
      s.zeta.col(i) = standard_normal_vector(dim, rng);
      continue;
    }
    const int start = data.subject_start[i];
    const int len = data.subject_start[i + 1] - start;
    Eigen::MatrixXd zi(len, na);
    for (Eigen::Index a = 0; a < na; ++a) zi.col(a) = data.z.col(active[a]).segment(start, len);
    const Eigen::MatrixXd g = zi * kg;  // len x D
    const Eigen::VectorXd w = s.omega.segment(start, len);
    const Eigen::VectorXd psi_rest = s.psi.segment(start, len) - g * s.zeta.col(i);
    Eigen::MatrixXd precision = Eigen::MatrixXd::Identity(dim, dim);
    precision.noalias() += g.transpose() * w.asDiagonal() * g;
    const Eigen::VectorXd rhs =
        g.transpose() * (model.kappa_obs.segment(start, len) - w.cwiseProduct(psi_rest));
    s.zeta.col(i) = sample_canonical_normal(precision, rhs, rng);
    s.psi.segment(start, len) = psi_rest + g * s.zeta.col(i);
  }
}

void gibbs_sweep(const Model& model, ParamState& s, RngStream& rng) {
  update_omega(model, s, rng);
  if (model.hp.dp_fixed) update_beta_clusters(model, s, rng);
  update_beta_nu(model, s, rng);
  update_xi_and_rescale(model, s, rng);
  update_mu(s, rng);
  update_vartheta(model, s, rng);
  if (model.hp.dp_random) update_kappa_clusters(model, s, rng);
  update_kappa_lambda(model, s, rng);
  update_a_conc(model, s, rng);
  update_gamma(model, s, rng);
  update_zeta(model, s, rng);
}

}  // namespace tvem
