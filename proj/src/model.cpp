#include "tvem/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "tvem/stats.hpp"

namespace tvem {

std::string term_kind_name(TermKind kind) {
  switch (kind) {
    case TermKind::Nonlinear: return "nonlinear";
    case TermKind::Linear: return "linear";
    case TermKind::Main: return "main";
  }
  return "?";
}

int Dataset::obs_index(int subject, int occasion) const {
  if (subject < 0 || subject >= n_subjects()) throw std::out_of_range("Dataset: subject out of range");
  const int o = subject_start[subject] + occasion;
  if (occasion < 0 || o >= subject_start[subject + 1]) throw std::out_of_range("Dataset: occasion out of range");
  return o;
}

void Dataset::validate() const {
  const int n = n_obs();
  if (x.rows() != n || z.rows() != n || u.size() != n || static_cast<int>(subject_of.size()) != n)
    throw std::invalid_argument("Dataset: inconsistent row counts");
  if (static_cast<int>(subject_start.size()) != n_subjects() + 1 || subject_start.back() != n)
    throw std::invalid_argument("Dataset: bad subject offsets");
  if (static_cast<int>(x_names.size()) != x.cols() || static_cast<int>(z_names.size()) != z.cols())
    throw std::invalid_argument("Dataset: column names do not match design widths");
  for (int o = 0; o < n; ++o)
    if (y(o) != 0.0 && y(o) != 1.0) throw std::invalid_argument("Dataset: outcome must be 0/1");
}

Dataset make_lagged_dataset(const std::vector<SubjectSeries>& subjects, std::vector<std::string> x_names,
                            std::vector<std::string> z_names) {
  Dataset data;
  const int p = static_cast<int>(x_names.size());
  const int d = static_cast<int>(z_names.size());
  int n = 0;
  for (const auto& s : subjects) {
    const int ni = static_cast<int>(s.u.size());
    if (ni < 2) throw std::invalid_argument("subject " + s.id + " has fewer than 2 assessments");
    if (static_cast<int>(s.outcome.size()) != ni || s.x.rows() != ni || s.z.rows() != ni || s.x.cols() != p ||
        s.z.cols() != d)
      throw std::invalid_argument("subject " + s.id + ": inconsistent series lengths");
    n += ni - 1;
  }
  data.x.resize(n, p);
  data.z.resize(n, d);
  data.u.resize(n);
  data.y.resize(n);
  data.subject_of.resize(n);
  data.subject_start.push_back(0);
  int o = 0;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto& s = subjects[i];
    data.subject_ids.push_back(s.id);
    for (std::size_t j = 0; j + 1 < s.u.size(); ++j, ++o) {
      const auto jj = static_cast<Eigen::Index>(j);
      data.x.row(o) = s.x.row(jj);
      data.z.row(o) = s.z.row(jj);
      data.u(o) = s.u[j];
      const int next = s.outcome[j + 1];
      if (next != 0 && next != 1) throw std::invalid_argument("subject " + s.id + ": outcome must be 0/1");
      data.y(o) = next;
      data.subject_of[o] = static_cast<int>(i);
    }
    data.subject_start.push_back(o);
  }
  data.x_names = std::move(x_names);
  data.z_names = std::move(z_names);
  for (const auto& name : data.x_names) data.scaling.push_back({name, false, 0.0, 1.0});
  data.validate();
  return data;
}

void standardize_columns(Dataset& data, const std::vector<std::string>& names) {
  const int n = data.n_obs();
  if (n < 2) throw std::invalid_argument("standardize: need at least 2 observations");
  for (const auto& name : names) {
    Eigen::Index xc = -1, zc = -1;
    for (std::size_t k = 0; k < data.x_names.size(); ++k)
      if (data.x_names[k] == name) xc = static_cast<Eigen::Index>(k);
    for (std::size_t k = 0; k < data.z_names.size(); ++k)
      if (data.z_names[k] == name) zc = static_cast<Eigen::Index>(k);
    if (xc < 0 && zc < 0) throw std::invalid_argument("standardize: unknown column " + name);
    Eigen::VectorXd col = xc >= 0 ? Eigen::VectorXd(data.x.col(xc)) : Eigen::VectorXd(data.z.col(zc));
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().sum() / (n - 1));
    if (!(sd > 0.0)) throw std::invalid_argument("standardize: column " + name + " is constant");
    if (xc >= 0) {
      data.x.col(xc) = (data.x.col(xc).array() - mean) / sd;
      data.scaling[static_cast<std::size_t>(xc)] = {name, true, mean, sd};
    }
    if (zc >= 0) data.z.col(zc) = (data.z.col(zc).array() - mean) / sd;
  }
}

void Hyperparams::validate() const {
  if (!(tau2 > 0 && v0 > 0)) throw std::invalid_argument("Hyperparams: variances must be > 0");
  for (double v : {a_nu, b_nu, a_lambda, b_lambda, a_theta, b_theta, a_A, b_A})
    if (!(v > 0)) throw std::invalid_argument("Hyperparams: beta/gamma hyperparameters must be > 0");
  if (V_gamma.size() > 0 && V_gamma.rows() != V_gamma.cols())
    throw std::invalid_argument("Hyperparams: V_gamma must be square");
}

ModelLayout make_layout(const Dataset& data, const SplineReparam& spline, const Hyperparams& hp) {
  hp.validate();
  ModelLayout lay;
  lay.n_fixed = data.n_fixed();
  lay.n_random = data.n_random();
  lay.rank = spline.rank();
  lay.n_terms = 3 * lay.n_fixed;
  if (spline.u_star.rows() != data.n_obs()) throw std::invalid_argument("Model: spline rows != observations");
  if (hp.fixed_modes.empty()) {
    lay.fixed_modes.assign(lay.n_terms, TermMode::Selectable);
    for (int k = 0; k < 3 && k < lay.n_terms; ++k) lay.fixed_modes[k] = TermMode::Forced;
  } else {
    if (static_cast<int>(hp.fixed_modes.size()) != lay.n_terms)
      throw std::invalid_argument("Hyperparams: fixed_modes length must be 3P");
    lay.fixed_modes = hp.fixed_modes;
  }
  if (hp.random_modes.empty()) {
    lay.random_modes.assign(lay.n_random, TermMode::Selectable);
  } else {
    if (static_cast<int>(hp.random_modes.size()) != lay.n_random)
      throw std::invalid_argument("Hyperparams: random_modes length must be D");
    lay.random_modes = hp.random_modes;
  }
  lay.dp_item.assign(lay.n_terms, false);
  for (int t = 0; t < lay.n_terms; ++t)
    lay.dp_item[t] = hp.dp_fixed && term_kind(t) != TermKind::Nonlinear && lay.fixed_modes[t] != TermMode::Absent;

  const int n_gamma = lay.n_random * (lay.n_random - 1) / 2;
  lay.gamma0 = hp.gamma0.size() == 0 ? Eigen::VectorXd::Zero(n_gamma) : hp.gamma0;
  lay.V_gamma = hp.V_gamma.size() == 0 ? Eigen::MatrixXd::Identity(n_gamma, n_gamma) : hp.V_gamma;
  if (lay.gamma0.size() != n_gamma || lay.V_gamma.rows() != n_gamma)
    throw std::invalid_argument("Hyperparams: gamma prior must have D(D-1)/2 entries");
  return lay;
}

Model::Model(const Dataset& d, const SplineReparam& s, Hyperparams h)
    : data(d), spline(s), hp(std::move(h)), layout(make_layout(d, s, hp)) {
  kappa_obs = data.y.array() - 0.5;
}

double fixed_design(const Model& model, const ParamState& state, int t, int o) {
  const int p = term_covariate(t);
  const double x = model.data.x(o, p);
  switch (term_kind(t)) {
    case TermKind::Nonlinear: return model.spline.u_star.row(o).dot(state.xi.col(p)) * x;
    case TermKind::Linear: return model.data.u(o) * x;
    case TermKind::Main: return x;
  }
  return 0.0;
}

Eigen::VectorXd fixed_design_column(const Model& model, const ParamState& state, int t) {
  const int p = term_covariate(t);
  const auto xcol = model.data.x.col(p);
  switch (term_kind(t)) {
    case TermKind::Nonlinear: return (model.spline.u_star * state.xi.col(p)).cwiseProduct(xcol);
    case TermKind::Linear: return model.data.u.cwiseProduct(xcol);
    case TermKind::Main: return xcol;
  }
  return {};
}

Eigen::VectorXd kappa_design_column(const Model& model, const ParamState& state, int d) {
  const Dataset& data = model.data;
  Eigen::VectorXd col(data.n_obs());
  for (int i = 0; i < data.n_subjects(); ++i) {
    const double g = state.gamma.row(d).dot(state.zeta.col(i));
    for (int o = data.subject_start[i]; o < data.subject_start[i + 1]; ++o) col(o) = data.z(o, d) * g;
  }
  return col;
}

double linear_predictor(const Model& model, const ParamState& state, int subject, int occasion) {
  const Dataset& data = model.data;
  const int o = data.obs_index(subject, occasion);
  double psi = 0.0;
  for (int p = 0; p < data.n_fixed(); ++p) {
    const double f = state.beta(term_index(p, TermKind::Nonlinear)) * model.spline.u_star.row(o).dot(state.xi.col(p)) +
                     state.beta(term_index(p, TermKind::Linear)) * data.u(o) +
                     state.beta(term_index(p, TermKind::Main));
    psi += f * data.x(o, p);
  }
  if (data.n_random() > 0) {
    const Eigen::VectorXd alpha = state.kappa.asDiagonal() * (state.gamma * state.zeta.col(subject));
    psi += data.z.row(o).dot(alpha);
  }
  return psi;
}

Eigen::VectorXd compute_psi(const Model& model, const ParamState& state) {
  const Dataset& data = model.data;
  const int p = data.n_fixed();
  Eigen::RowVectorXd bstar(p), blin(p), bmain(p);
  for (int c = 0; c < p; ++c) {
    bstar(c) = state.beta(term_index(c, TermKind::Nonlinear));
    blin(c) = state.beta(term_index(c, TermKind::Linear));
    bmain(c) = state.beta(term_index(c, TermKind::Main));
  }
  Eigen::MatrixXd f = model.spline.u_star * state.xi;  // n x P
  f.array().rowwise() *= bstar.array();
  f += data.u * blin;
  f.rowwise() += bmain;
  Eigen::VectorXd psi = f.cwiseProduct(data.x).rowwise().sum();
  if (data.n_random() > 0) {
    const Eigen::MatrixXd alpha = state.kappa.asDiagonal() * (state.gamma * state.zeta);  // D x N
    for (int i = 0; i < data.n_subjects(); ++i) {
      const int s = data.subject_start[i];
      const int len = data.subject_start[i + 1] - s;
      psi.segment(s, len) += data.z.middleRows(s, len) * alpha.col(i);
    }
  }
  return psi;
}

void refresh_psi(const Model& model, ParamState& state) { state.psi = compute_psi(model, state); }

double bernoulli_logit_loglik(double y, double psi) {
  // y psi - log(1 + e^psi), evaluated stably
  const double softplus = psi > 0 ? psi + std::log1p(std::exp(-psi)) : std::log1p(std::exp(psi));
  return y * psi - softplus;
}

Eigen::VectorXd pointwise_loglik(const Model& model, const ParamState& state) {
  const Eigen::VectorXd psi = compute_psi(model, state);
  Eigen::VectorXd ll(psi.size());
  for (Eigen::Index o = 0; o < psi.size(); ++o) ll(o) = bernoulli_logit_loglik(model.data.y(o), psi(o));
  return ll;
}

void rescale_xi(const Model& model, ParamState& state) {
  for (int p = 0; p < model.layout.n_fixed; ++p) {
    const double m = state.xi.col(p).cwiseAbs().mean();
    if (!(m > 0.0) || !std::isfinite(m)) continue;
    state.xi.col(p) /= m;
    state.beta(term_index(p, TermKind::Nonlinear)) *= m;
  }
}

ParamState init_state(const Model& model, RngStream& rng) {
  const ModelLayout& lay = model.layout;
  const Hyperparams& hp = model.hp;
  const int n_subj = model.data.n_subjects();
  ParamState s;
  s.beta = Eigen::VectorXd::Zero(lay.n_terms);
  s.nu.assign(lay.n_terms, 0);
  s.c_beta.assign(lay.n_terms, -1);
  int next_cluster = 0;
  for (int t = 0; t < lay.n_terms; ++t) {
    switch (lay.fixed_modes[t]) {
      case TermMode::Forced: s.nu[t] = 1; break;
      case TermMode::Absent: s.nu[t] = 0; break;
      case TermMode::Selectable: s.nu[t] = rng.bernoulli(0.5) ? 1 : 0; break;
    }
    if (s.nu[t]) {
      s.beta(t) = std::sqrt(hp.tau2) * rng.normal();
      if (lay.dp_item[t]) s.c_beta[t] = next_cluster++;
    }
  }

  s.mu.resize(lay.rank, lay.n_fixed);
  s.xi.resize(lay.rank, lay.n_fixed);
  for (int p = 0; p < lay.n_fixed; ++p) {
    for (int r = 0; r < lay.rank; ++r) {
      s.mu(r, p) = rng.bernoulli(0.5) ? 1.0 : -1.0;
      s.xi(r, p) = s.mu(r, p) + rng.normal();
    }
  }

  const int d = lay.n_random;
  s.kappa = Eigen::VectorXd::Zero(d);
  s.lambda.assign(d, 0);
  s.c_kappa.assign(d, -1);
  next_cluster = 0;
  for (int k = 0; k < d; ++k) {
    switch (lay.random_modes[k]) {
      case TermMode::Forced: s.lambda[k] = 1; break;
      case TermMode::Absent: s.lambda[k] = 0; break;
      case TermMode::Selectable: s.lambda[k] = rng.bernoulli(0.5) ? 1 : 0; break;
    }
    if (s.lambda[k]) {
      s.kappa(k) = sample_folded_normal(hp.m0, hp.v0, rng);
      if (hp.dp_random) s.c_kappa[k] = next_cluster++;
    }
  }
  s.gamma = Eigen::MatrixXd::Identity(d, d);
  for (int r = 1; r < d; ++r) {
    for (int l = 0; l < r; ++l) {
      if (s.lambda[r] && s.lambda[l]) {
        const int e = gamma_entry(r, l);
        s.gamma(r, l) = lay.gamma0(e) + std::sqrt(lay.V_gamma(e, e)) * rng.normal();
      }
    }
  }
  s.zeta.resize(d, n_subj);
  for (int i = 0; i < n_subj; ++i)
    for (int k = 0; k < d; ++k) s.zeta(k, i) = rng.normal();
  s.omega = Eigen::VectorXd::Ones(model.data.n_obs());
  s.vartheta = 1.0;
  s.a_conc = 1.0;
  rescale_xi(model, s);
  refresh_psi(model, s);
  return s;
}

std::optional<std::string> check_invariants(const Model& model, const ParamState& s) {
  const ModelLayout& lay = model.layout;
  std::ostringstream msg;
  for (int t = 0; t < lay.n_terms; ++t) {
    if (!s.nu[t] && s.beta(t) != 0.0) {
      msg << "beta[" << t << "] nonzero while excluded";
      return msg.str();
    }
    if (lay.fixed_modes[t] == TermMode::Forced && !s.nu[t]) return "forced term excluded";
    if (lay.fixed_modes[t] == TermMode::Absent && s.nu[t]) return "absent term included";
    const bool labelled = s.c_beta[t] >= 0;
    if (labelled != (lay.dp_item[t] && s.nu[t] == 1)) {
      msg << "cluster label of beta[" << t << "] inconsistent with inclusion";
      return msg.str();
    }
  }
  for (int t = 0; t < lay.n_terms; ++t)
    for (int q = t + 1; q < lay.n_terms; ++q)
      if (s.c_beta[t] >= 0 && s.c_beta[t] == s.c_beta[q] && s.beta(t) != s.beta(q))
        return "members of one beta cluster disagree";
  for (int d = 0; d < lay.n_random; ++d) {
    if (s.kappa(d) < 0.0) return "negative kappa";
    if (!s.lambda[d] && s.kappa(d) != 0.0) return "kappa nonzero while excluded";
    if ((s.c_kappa[d] >= 0) != (model.hp.dp_random && s.lambda[d] == 1)) return "kappa cluster label inconsistent";
    for (int l = 0; l < lay.n_random; ++l) {
      if (l == d && s.gamma(d, l) != 1.0) return "Gamma diagonal not one";
      if (l > d && s.gamma(d, l) != 0.0) return "Gamma not lower-triangular";
      if (l < d && !(s.lambda[d] && s.lambda[l]) && s.gamma(d, l) != 0.0) return "inactive Gamma entry nonzero";
    }
  }
  for (int d = 0; d < lay.n_random; ++d)
    for (int q = d + 1; q < lay.n_random; ++q)
      if (s.c_kappa[d] >= 0 && s.c_kappa[d] == s.c_kappa[q] && s.kappa(d) != s.kappa(q))
        return "members of one kappa cluster disagree";
  return std::nullopt;
}

}  // namespace tvem
