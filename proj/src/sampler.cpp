#include "tvem/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iostream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace tvem {

namespace {
std::mutex progress_mutex;
}

void RunConfig::validate() const {
  if (n_iter < 1) throw std::invalid_argument("RunConfig: n_iter must be >= 1");
  if (burn_in < 0 || burn_in >= n_iter) throw std::invalid_argument("RunConfig: need 0 <= burn_in < n_iter");
  if (thin < 1) throw std::invalid_argument("RunConfig: thin must be >= 1");
  if (n_chains < 1) throw std::invalid_argument("RunConfig: n_chains must be >= 1");
}

PosteriorDraws run_chain(const Model& model, const RunConfig& run, int chain_id) {
  run.validate();
  RngStream rng(run.seed, static_cast<std::uint64_t>(chain_id));
  ParamState state = init_state(model, rng);
  PosteriorDraws out;
  out.burn_in = run.burn_in;
  out.thin = run.thin;
  out.seed = run.seed;
  out.chain_id = chain_id;
  out.snapshots.reserve(static_cast<std::size_t>(run.n_snapshots()));
  out.loglik_trace.reserve(static_cast<std::size_t>(run.n_iter));

  for (int iter = 1; iter <= run.n_iter; ++iter) {
    gibbs_sweep(model, state, rng);
    double ll = 0.0;
    for (Eigen::Index o = 0; o < state.psi.size(); ++o) {
      if (!std::isfinite(state.psi(o)))
        throw std::runtime_error("run_chain: non-finite linear predictor at sweep " + std::to_string(iter));
      ll += bernoulli_logit_loglik(model.data.y(o), state.psi(o));
    }
    out.loglik_trace.push_back(ll);
    if (iter > run.burn_in && (iter - run.burn_in) % run.thin == 0) {
      ParamState snap = state;
      snap.omega.resize(0);
      snap.psi.resize(0);
      out.snapshots.push_back(std::move(snap));
    }
    if (run.progress_every > 0 && iter % run.progress_every == 0) {
      std::lock_guard<std::mutex> lock(progress_mutex);
      std::cerr << "chain " << chain_id << ": sweep " << iter << "/" << run.n_iter << " loglik " << ll << "\n";
    }
  }
  return out;
}

std::vector<PosteriorDraws> run_chains(const Model& model, const RunConfig& run) {
  run.validate();
  std::vector<PosteriorDraws> out(static_cast<std::size_t>(run.n_chains));
  if (run.n_chains == 1) {
    out[0] = run_chain(model, run, 0);
    return out;
  }
  std::vector<std::exception_ptr> errors(out.size());
  std::vector<std::thread> workers;
  for (int c = 0; c < run.n_chains; ++c) {
    workers.emplace_back([&, c] {
      try {
        out[c] = run_chain(model, run, c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

double gelman_rubin(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw std::invalid_argument("rhat: need at least 2 chains");
  std::size_t n = chains[0].size();
  for (const auto& c : chains) n = std::min(n, c.size());
  if (n < 2) throw std::invalid_argument("rhat: need at least 2 draws per chain");
  const double m = static_cast<double>(chains.size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += c[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (c[i] - mean) * (c[i] - mean);
    means.push_back(mean);
    vars.push_back(ss / static_cast<double>(n - 1));
  }
  double grand = 0.0, w = 0.0;
  for (std::size_t j = 0; j < means.size(); ++j) {
    grand += means[j];
    w += vars[j];
  }
  grand /= m;
  w /= m;
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= static_cast<double>(n) / (m - 1.0);
  const double nn = static_cast<double>(n);
  if (w <= 0.0) return b <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double var_plus = (nn - 1.0) / nn * w + b / nn;
  return std::sqrt(var_plus / w);
}

RhatResult rhat(const std::vector<PosteriorDraws>& chains, CoefficientId which) {
  if (chains.size() < 2) throw std::invalid_argument("rhat: need at least 2 chains");
  std::vector<std::vector<double>> values(chains.size());
  std::size_t total = 0, included = 0;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    for (const auto& s : chains[c].snapshots) {
      ++total;
      const bool in = which.family == CoefficientFamily::Fixed ? s.nu.at(which.index) == 1 : s.lambda.at(which.index) == 1;
      if (!in) continue;
      ++included;
      values[c].push_back(which.family == CoefficientFamily::Fixed ? s.beta(which.index) : s.kappa(which.index));
    }
  }
  RhatResult out;
  out.inclusion = total > 0 ? static_cast<double>(included) / static_cast<double>(total) : 0.0;
  out.low_inclusion = out.inclusion < 0.5;
  std::size_t n = values[0].size();
  for (const auto& v : values) n = std::min(n, v.size());
  out.value = n >= 2 ? gelman_rubin(values) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

Eigen::VectorXd inclusion_means(const PosteriorDraws& draws) {
  if (draws.snapshots.empty()) throw std::invalid_argument("inclusion_means: no snapshots");
  const auto t = static_cast<Eigen::Index>(draws.snapshots[0].nu.size());
  const auto d = static_cast<Eigen::Index>(draws.snapshots[0].lambda.size());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(t + d);
  for (const auto& s : draws.snapshots) {
    for (Eigen::Index k = 0; k < t; ++k) out(k) += s.nu[k];
    for (Eigen::Index k = 0; k < d; ++k) out(t + k) += s.lambda[k];
  }
  return out / static_cast<double>(draws.snapshots.size());
}

double pearson_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("correlation: length mismatch");
  const Eigen::ArrayXd da = a.array() - a.mean();
  const Eigen::ArrayXd db = b.array() - b.mean();
  const double sa = std::sqrt((da * da).sum());
  const double sb = std::sqrt((db * db).sum());
  if (sa == 0.0 || sb == 0.0) throw std::invalid_argument("correlation: constant vector");
  return (da * db).sum() / (sa * sb);
}

double mppi_correlation(const PosteriorDraws& a, const PosteriorDraws& b) {
  return pearson_correlation(inclusion_means(a), inclusion_means(b));
}

}  // namespace tvem
