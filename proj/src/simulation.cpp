#include "tvem/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "tvem/stats.hpp"

namespace tvem {

void SimDesign::validate() const {
  if (n_subjects < 1) throw std::invalid_argument("SimDesign: n_subjects must be >= 1");
  if (min_assessments < 2 || max_assessments < min_assessments)
    throw std::invalid_argument("SimDesign: need 2 <= min_assessments <= max_assessments");
  if (n_covariates < 5) throw std::invalid_argument("SimDesign: need at least 5 covariates");
  if (n_active_random < 0 || n_active_random > n_covariates)
    throw std::invalid_argument("SimDesign: bad n_active_random");
  if (!(jitter_prob >= 0.0 && jitter_prob <= 1.0)) throw std::invalid_argument("SimDesign: jitter_prob");
}

double true_effect(int covariate, double t) {
  switch (covariate) {
    case 0: return kPi * std::sin(3.0 * kPi * t) + 1.4 * t - 1.6;
    case 1: return kPi * std::cos(2.0 * kPi * t) + 1.6;
    case 2: return -kPi * t * std::sin(5.0 * kPi * t) + 1.7 * t - 1.5;
    case 3: return -1.5 * t + 1.6;
    case 4: return -1.6;
    default: return 0.0;
  }
}

SimTruth make_truth(const SimDesign& design) {
  const int p = design.n_covariates;
  SimTruth truth;
  truth.fixed.assign(3 * p, 0);
  auto on = [&](int cov, TermKind k) { truth.fixed[term_index(cov, k)] = 1; };
  on(0, TermKind::Nonlinear), on(0, TermKind::Linear), on(0, TermKind::Main);
  on(1, TermKind::Nonlinear), on(1, TermKind::Main);
  on(2, TermKind::Nonlinear), on(2, TermKind::Linear), on(2, TermKind::Main);
  on(3, TermKind::Linear), on(3, TermKind::Main);
  on(4, TermKind::Main);
  const int n_active = std::accumulate(truth.fixed.begin(), truth.fixed.end(), 0);
  if (n_active != 11) throw std::logic_error("make_truth: expected 11 active fixed terms");

  truth.random.assign(p, 0);
  for (int d = 0; d < design.n_active_random; ++d) truth.random[d] = 1;

  // main/linear values sit near +1.5 or -1.5
  for (int t = 0; t < 3 * p; ++t) {
    if (term_kind(t) == TermKind::Nonlinear) continue;
    truth.cluster_items.push_back(t);
    int label = 0;
    const int cov = term_covariate(t);
    const bool lin = term_kind(t) == TermKind::Linear;
    if ((cov == 0 && lin) || (cov == 1 && !lin) || (cov == 2 && lin) || (cov == 3 && !lin)) label = 1;
    if ((cov == 0 && !lin) || (cov == 2 && !lin) || (cov == 3 && lin) || (cov == 4 && !lin)) label = 2;
    truth.fixed_clusters.push_back(label);
  }
  truth.fixed_clusters = canonical_labels(truth.fixed_clusters);
  truth.random_clusters = canonical_labels(Partition(truth.random.begin(), truth.random.end()));
  return truth;
}

SimReplicate simulate_replicate(const SimDesign& design, std::uint64_t seed) {
  design.validate();
  RngStream rng(seed, 0);
  const int p = design.n_covariates;
  const int q = p - 1;

  Eigen::MatrixXd sigma(q, q);
  for (int s = 0; s < q; ++s)
    for (int t = 0; t < q; ++t) sigma(s, t) = std::pow(design.ar_weight, std::abs(s - t));
  const Eigen::MatrixXd lx = sigma.llt().matrixL();

  const int na = design.n_active_random;
  Eigen::MatrixXd sig_a = Eigen::MatrixXd::Constant(na, na, design.re_covariance);
  sig_a.diagonal().setConstant(design.re_variance);
  const Eigen::MatrixXd la = na > 0 ? Eigen::MatrixXd(sig_a.llt().matrixL()) : Eigen::MatrixXd();

  std::vector<std::string> names{"intercept"};
  for (int k = 1; k < p; ++k) names.push_back("x" + std::to_string(k));

  SimReplicate out;
  out.truth = make_truth(design);
  std::vector<double> psi_all;
  for (int i = 0; i < design.n_subjects; ++i) {
    const int ni = design.min_assessments +
                   static_cast<int>(rng.uniform_index(static_cast<std::size_t>(design.max_assessments - design.min_assessments + 1)));
    SubjectSeries s;
    s.id = "s" + std::to_string(i + 1);
    s.u.resize(static_cast<std::size_t>(ni));
    for (auto& t : s.u) t = rng.uniform();
    std::sort(s.u.begin(), s.u.end());

    Eigen::VectorXd e(q);
    for (int k = 0; k < q; ++k) e(k) = rng.normal();
    const Eigen::VectorXd base = lx * e;
    s.x.resize(ni, p);
    for (int j = 0; j < ni; ++j) {
      s.x(j, 0) = 1.0;
      for (int k = 0; k < q; ++k) {
        double v = base(k);
        if (rng.uniform() < design.jitter_prob) v += rng.normal();
        s.x(j, k + 1) = v;
      }
    }
    s.z = s.x;

    Eigen::VectorXd a = Eigen::VectorXd::Zero(p);
    if (na > 0) {
      Eigen::VectorXd ea(na);
      for (int k = 0; k < na; ++k) ea(k) = rng.normal();
      a.head(na) = la * ea;
    }
    // the outcome at j + 1 follows the predictors at j
    s.outcome.assign(static_cast<std::size_t>(ni), 0);
    s.outcome[0] = rng.uniform() < 0.5 ? 1 : 0;
    for (int j = 0; j + 1 < ni; ++j) {
      double psi = s.z.row(j).dot(a);
      for (int k = 0; k < 5; ++k) psi += true_effect(k, s.u[static_cast<std::size_t>(j)]) * s.x(j, k);
      psi_all.push_back(psi);
      s.outcome[static_cast<std::size_t>(j + 1)] = rng.uniform() < 1.0 / (1.0 + std::exp(-psi)) ? 1 : 0;
    }
    out.subjects.push_back(std::move(s));
  }
  out.data = make_lagged_dataset(out.subjects, names, names);
  out.psi = Eigen::Map<const Eigen::VectorXd>(psi_all.data(), static_cast<Eigen::Index>(psi_all.size()));
  if (design.standardize) standardize_columns(out.data, std::vector<std::string>(names.begin() + 1, names.end()));
  return out;
}

void permute_random_effects(Dataset& data, const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != data.n_random()) throw std::invalid_argument("permute: size mismatch");
  Eigen::MatrixXd z(data.z.rows(), data.z.cols());
  std::vector<std::string> names;
  for (std::size_t k = 0; k < perm.size(); ++k) {
    z.col(static_cast<Eigen::Index>(k)) = data.z.col(perm[k]);
    names.push_back(data.z_names[static_cast<std::size_t>(perm[k])]);
  }
  data.z = z;
  data.z_names = names;
}

std::vector<StudyVariant> default_variants() {
  Hyperparams base;
  base.tau2 = 2.0;
  base.m0 = 0.0;
  base.v0 = 10.0;
  StudyVariant plain{"PGBVS", base, false};
  StudyVariant dp{"PGBVSDP", base, false};
  dp.hp.dp_fixed = dp.hp.dp_random = true;
  return {plain, dp};
}

std::vector<StudyVariant> sensitivity_variants() {
  Hyperparams base;
  base.tau2 = base.v0 = 5.0;
  base.dp_fixed = base.dp_random = true;
  std::vector<StudyVariant> out{{"base", base, false}};
  auto add = [&](const std::string& name, auto edit) {
    Hyperparams h = base;
    edit(h);
    out.push_back({name, h, false});
  };
  add("incl_1_9", [](Hyperparams& h) { h.a_nu = h.a_lambda = 1.0, h.b_nu = h.b_lambda = 9.0; });
  add("incl_9_1", [](Hyperparams& h) { h.a_nu = h.a_lambda = 9.0, h.b_nu = h.b_lambda = 1.0; });
  add("var_2", [](Hyperparams& h) { h.tau2 = h.v0 = 2.0; });
  add("var_10", [](Hyperparams& h) { h.tau2 = h.v0 = 10.0; });
  add("conc_0.1", [](Hyperparams& h) { h.a_theta = h.b_theta = h.a_A = h.b_A = 0.1; });
  add("conc_10", [](Hyperparams& h) { h.a_theta = h.b_theta = h.a_A = h.b_A = 10.0; });
  return out;
}

ReplicateFit fit_replicate(const SimReplicate& rep, const StudyVariant& variant, const SplineConfig& spline,
                           const RunConfig& run, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  ReplicateFit fit;
  fit.data = rep.data;
  fit.hp = variant.hp;
  const int d = fit.data.n_random();
  fit.perm.resize(static_cast<std::size_t>(d));
  std::iota(fit.perm.begin(), fit.perm.end(), 0);
  if (variant.permute_z) {
    RngStream prng(seed, 7919);
    std::shuffle(fit.perm.begin(), fit.perm.end(), prng.engine());
    permute_random_effects(fit.data, fit.perm);
  }
  std::vector<double> u(fit.data.u.data(), fit.data.u.data() + fit.data.u.size());
  fit.reparam = build_reparam(u, spline);
  const Model model(fit.data, fit.reparam, fit.hp);
  RunConfig rc = run;
  rc.seed = seed;
  fit.chains = run_chains(model, rc);
  fit.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return fit;
}

StudyRow score_replicate(const ReplicateFit& fit, const SimTruth& truth, const std::string& variant, int replicate,
                         std::uint64_t seed) {
  StudyRow row;
  row.replicate = replicate;
  row.variant = variant;
  row.seconds = fit.seconds;
  const int d = fit.data.n_random();
  const std::vector<int>& perm = fit.perm;
  const std::vector<const ParamState*> draws = pool_snapshots(fit.chains);
  const SelectionReport sel = compute_mppi(draws);

  std::vector<int> fsel(static_cast<std::size_t>(sel.mppi_fixed.size()), 0);
  for (int t : sel.median_fixed) fsel[t] = 1;
  const SelectionMetrics fm = selection_metrics(fsel, truth.fixed);

  row.mppi_random = Eigen::VectorXd::Zero(d);
  for (int k = 0; k < d; ++k) row.mppi_random(perm[k]) = sel.mppi_random(k);
  std::vector<int> rsel(static_cast<std::size_t>(d), 0);
  for (int k = 0; k < d; ++k) rsel[k] = row.mppi_random(k) >= 0.5 ? 1 : 0;
  const SelectionMetrics rm = selection_metrics(rsel, truth.random);
  row.fsens = fm.sens, row.fspec = fm.spec, row.fmcc = fm.mcc;
  row.rsens = rm.sens, row.rspec = rm.spec, row.rmcc = rm.mcc;

  RngStream crng(seed, 104729);
  if (fit.hp.dp_fixed) {
    const ClusterEstimate est = salso_cluster(fixed_partition_draws(draws, truth.cluster_items), crng);
    row.fclust = variation_of_information(est.labels, truth.fixed_clusters);
  }
  if (fit.hp.dp_random) {
    const ClusterEstimate est = salso_cluster(random_partition_draws(draws), crng);
    Partition orig(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) orig[static_cast<std::size_t>(perm[k])] = est.labels[static_cast<std::size_t>(k)];
    row.rclust = variation_of_information(orig, truth.random_clusters);
  }
  return row;
}

StudyRow evaluate_replicate(const SimReplicate& rep, const StudyVariant& variant, const SplineConfig& spline,
                            const RunConfig& run, int replicate, std::uint64_t seed) {
  const ReplicateFit fit = fit_replicate(rep, variant, spline, run, seed);
  return score_replicate(fit, rep.truth, variant.name, replicate, seed);
}

std::vector<StudyRow> run_simulation_study(const StudyConfig& config) {
  std::vector<StudyRow> rows;
  if (config.n_replicates <= 0) return rows;
  const int nv = static_cast<int>(config.variants.size());
  const int jobs = config.n_replicates * nv;
  rows.resize(static_cast<std::size_t>(jobs));
  std::mutex log_mutex;
  std::vector<SimReplicate> reps(static_cast<std::size_t>(config.n_replicates));
  for (int r = 0; r < config.n_replicates; ++r)
    reps[r] = simulate_replicate(config.design, RngStream(config.seed, static_cast<std::uint64_t>(r)).engine()());

  std::atomic<int> next{0};
  auto worker = [&] {
    for (int job = next++; job < jobs; job = next++) {
      const int r = job / nv, v = job % nv;
      const StudyVariant& var = config.variants[static_cast<std::size_t>(v)];
      const std::uint64_t chain_seed = RngStream(config.seed, 100000 + static_cast<std::uint64_t>(r)).engine()();
      StudyRow row;
      try {
        row = evaluate_replicate(reps[r], var, config.spline, config.run, r, chain_seed);
      } catch (const std::exception& e) {
        row.replicate = r;
        row.variant = var.name;
        row.error = e.what();
      }
      if (config.verbose) {
        std::lock_guard<std::mutex> lock(log_mutex);
        std::cerr << "replicate " << r << " " << var.name << (row.error.empty() ? " done in " : " failed: ")
                  << (row.error.empty() ? std::to_string(row.seconds) + " s" : row.error) << "\n";
      }
      rows[static_cast<std::size_t>(job)] = std::move(row);
    }
  };
  const int nw = std::max(1, std::min(config.workers, jobs));
  std::vector<std::thread> pool;
  for (int w = 1; w < nw; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return rows;
}

std::vector<MetricSummary> aggregate_study(const std::vector<StudyRow>& rows) {
  std::vector<std::string> variants;
  for (const auto& r : rows)
    if (std::find(variants.begin(), variants.end(), r.variant) == variants.end()) variants.push_back(r.variant);
  const std::vector<std::string> metrics{"fSENS", "fSPEC", "fMCC", "rSENS", "rSPEC", "rMCC", "fCLUST", "rCLUST", "seconds"};
  auto pick = [](const StudyRow& r, std::size_t k) {
    const double v[] = {r.fsens, r.fspec, r.fmcc, r.rsens, r.rspec, r.rmcc, r.fclust, r.rclust, r.seconds};
    return v[k];
  };
  std::vector<MetricSummary> out;
  for (const auto& v : variants) {
    for (std::size_t k = 0; k < metrics.size(); ++k) {
      std::vector<double> xs;
      for (const auto& r : rows)
        if (r.variant == v && r.error.empty() && std::isfinite(pick(r, k))) xs.push_back(pick(r, k));
      if (xs.empty()) continue;
      MetricSummary m{v, metrics[k], 0.0, 0.0, static_cast<int>(xs.size())};
      m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
      double ss = 0.0;
      for (double x : xs) ss += (x - m.mean) * (x - m.mean);
      m.sd = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
      out.push_back(m);
    }
  }
  return out;
}

}  // namespace tvem
