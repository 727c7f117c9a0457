#include "tvem/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>

#include "tvem/inference.hpp"
#include "tvem/io.hpp"
#include "tvem/sampler.hpp"
#include "tvem/simulation.hpp"

namespace tvem {

namespace {

struct RunFlags {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int chains = 0, iters = 0, burnin = -1, thin = 0;
  bool dp_fixed = false, dp_random = false, sort = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "key = value config file");
  cmd->add_option("--chains", f.chains, "number of chains");
  cmd->add_option("--iters", f.iters, "sweeps per chain");
  cmd->add_option("--burnin", f.burnin, "burn-in sweeps");
  cmd->add_option("--thin", f.thin, "keep every k-th sweep");
  cmd->add_flag("--dp-fixed", f.dp_fixed, "spiked DP prior on main/linear fixed terms");
  cmd->add_flag("--dp-random", f.dp_random, "spiked DP prior on random-effect scales");
}

AppConfig resolve_config(const RunFlags& f) {
  AppConfig cfg = f.config.empty() ? AppConfig{} : load_config(f.config);
  if (f.seed_set) cfg.run.seed = f.seed;
  if (f.chains > 0) cfg.run.n_chains = f.chains;
  if (f.iters > 0) {
    cfg.run.n_iter = f.iters;
    if (f.burnin < 0 && cfg.run.burn_in >= f.iters) cfg.run.burn_in = f.iters / 2;
  }
  if (f.burnin >= 0) cfg.run.burn_in = f.burnin;
  if (f.thin > 0) cfg.run.thin = f.thin;
  if (f.dp_fixed) cfg.hp.dp_fixed = true;
  if (f.dp_random) cfg.hp.dp_random = true;
  if (f.sort) cfg.load.sort = true;
  return cfg;
}

std::string term_label(const std::vector<std::string>& x_names, int t) {
  return x_names[static_cast<std::size_t>(term_covariate(t))];
}

SplineReparam training_reparam(const DrawsFile& file, const Dataset& data) {
  SplineReparam rp = file.reparam;
  std::vector<double> u(data.u.data(), data.u.data() + data.u.size());
  rp.u_star = rp.u_star_at(u);
  rp.u_linear = data.u;
  return rp;
}

std::vector<std::vector<std::string>> mppi_rows(const SelectionReport& rep, const std::vector<std::string>& x_names,
                                                const std::vector<std::string>& z_names) {
  std::vector<std::vector<std::string>> rows;
  for (Eigen::Index t = 0; t < rep.mppi_fixed.size(); ++t) {
    const int ti = static_cast<int>(t);
    const bool sel = rep.mppi_fixed(t) >= 0.5;
    rows.push_back({term_label(x_names, ti), term_kind_name(term_kind(ti)), format_number(rep.mppi_fixed(t), 4),
                    sel ? "1" : "0"});
  }
  for (Eigen::Index d = 0; d < rep.mppi_random.size(); ++d)
    rows.push_back({z_names[static_cast<std::size_t>(d)], "random", format_number(rep.mppi_random(d), 4),
                    rep.mppi_random(d) >= 0.5 ? "1" : "0"});
  return rows;
}

void print_rows(std::ostream& out, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows) {
  for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "\t" : "") << header[k];
  out << "\n";
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.size(); ++k) out << (k ? "\t" : "") << r[k];
    out << "\n";
  }
}

int cmd_simulate(const RunFlags& f, const std::string& out, const std::string& truth_path) {
  const AppConfig cfg = resolve_config(f);
  const SimReplicate rep = simulate_replicate(cfg.design, cfg.run.seed);
  std::vector<std::string> names{"intercept"};
  for (int k = 1; k < cfg.design.n_covariates; ++k) names.push_back("x" + std::to_string(k));
  write_long_csv(out, rep.subjects, names);
  if (!truth_path.empty()) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t t = 0; t < rep.truth.fixed.size(); ++t)
      rows.push_back({names[static_cast<std::size_t>(term_covariate(static_cast<int>(t)))],
                      term_kind_name(term_kind(static_cast<int>(t))), std::to_string(rep.truth.fixed[t])});
    for (std::size_t d = 0; d < rep.truth.random.size(); ++d)
      rows.push_back({names[d], "random", std::to_string(rep.truth.random[d])});
    write_table(truth_path, {"term", "kind", "active"}, rows);
  }
  std::cerr << "wrote " << rep.subjects.size() << " subjects to " << out << "\n";
  return 0;
}

int cmd_fit(const RunFlags& f, const std::string& data_path, const std::string& out, const std::string& report) {
  AppConfig cfg = resolve_config(f);
  if (cfg.load.standardize.empty() && f.config.empty()) {
    // default: standardize every covariate except the intercept
    const LongTable table = read_long_csv(data_path, cfg.load.sort);
    for (const auto& c : table.covariates)
      if (c != "intercept") cfg.load.standardize.push_back(c);
  }
  const Dataset data = load_dataset(data_path, cfg.load);
  std::vector<double> u(data.u.data(), data.u.data() + data.u.size());
  const SplineReparam reparam = build_reparam(u, cfg.spline);
  const Model model(data, reparam, cfg.hp);
  std::cerr << data.n_subjects() << " subjects, " << data.n_obs() << " modeled pairs, spline rank " << reparam.rank()
            << "\n";
  if (cfg.run.progress_every == 0) cfg.run.progress_every = std::max(1, cfg.run.n_iter / 10);
  DrawsFile file;
  file.chains = run_chains(model, cfg.run);
  file.x_names = data.x_names;
  file.z_names = data.z_names;
  file.scaling = data.scaling;
  file.reparam = reparam;
  file.hp = cfg.hp;
  file.load = cfg.load;
  file.n_subjects = data.n_subjects();
  write_draws(out, file);
  const SelectionReport rep = compute_mppi(pool_snapshots(file.chains));
  const auto rows = mppi_rows(rep, data.x_names, data.z_names);
  const std::vector<std::string> header{"term", "kind", "mppi", "selected"};
  if (!report.empty()) write_table(report, header, rows);
  print_rows(std::cout, header, rows);
  return 0;
}

int cmd_summarize(const std::string& draws_path, const std::string& out_dir, int grid_points, std::uint64_t seed) {
  const DrawsFile file = read_draws(draws_path);
  const auto draws = pool_snapshots(file.chains);
  if (draws.empty()) throw std::invalid_argument("draws file holds no snapshots");
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);

  const SelectionReport rep = compute_mppi(draws);
  write_table((dir / "mppi.tsv").string(), {"term", "kind", "mppi", "selected"},
              mppi_rows(rep, file.x_names, file.z_names));

  std::vector<double> grid;
  const double lo = file.reparam.basis.lower(), hi = file.reparam.basis.upper();
  for (int g = 0; g < grid_points; ++g) grid.push_back(lo + (hi - lo) * g / std::max(1, grid_points - 1));
  std::vector<std::vector<std::string>> curve_rows;
  for (std::size_t p = 0; p < file.x_names.size(); ++p) {
    const CurveBand band = tve_curves(draws, file.reparam, static_cast<int>(p), grid);
    for (std::size_t g = 0; g < grid.size(); ++g)
      curve_rows.push_back({file.x_names[p], format_number(grid[g]), format_number(band.lower[g]),
                            format_number(band.median[g]), format_number(band.upper[g])});
  }
  write_table((dir / "curves.tsv").string(), {"covariate", "u", "or_lower", "or_median", "or_upper"}, curve_rows);

  std::vector<std::vector<std::string>> var_rows;
  const auto vars = random_effect_variances(draws);
  for (std::size_t d = 0; d < vars.size(); ++d)
    var_rows.push_back({file.z_names[d], format_number(rep.mppi_random(static_cast<Eigen::Index>(d)), 4),
                        format_number(vars[d].mean), format_number(vars[d].lower), format_number(vars[d].upper)});
  write_table((dir / "variances.tsv").string(), {"effect", "mppi", "mean", "lower", "upper"}, var_rows);

  RngStream rng(seed, 17);
  std::vector<std::vector<std::string>> cl_rows;
  if (file.hp.dp_fixed) {
    std::vector<int> items;
    for (int t = 0; t < static_cast<int>(3 * file.x_names.size()); ++t)
      if (term_kind(t) != TermKind::Nonlinear) items.push_back(t);
    const ClusterEstimate est = salso_cluster(fixed_partition_draws(draws, items), rng);
    for (std::size_t k = 0; k < items.size(); ++k)
      cl_rows.push_back({"fixed", term_label(file.x_names, items[k]), term_kind_name(term_kind(items[k])),
                         std::to_string(est.labels[k]), format_number(est.expected_loss)});
  }
  if (file.hp.dp_random) {
    const ClusterEstimate est = salso_cluster(random_partition_draws(draws), rng);
    for (std::size_t d = 0; d < file.z_names.size(); ++d)
      cl_rows.push_back({"random", file.z_names[d], "random", std::to_string(est.labels[d]),
                         format_number(est.expected_loss)});
  }
  if (!cl_rows.empty())
    write_table((dir / "clusters.tsv").string(), {"family", "term", "kind", "cluster", "expected_loss"}, cl_rows);

  if (file.chains.size() >= 2) {
    std::vector<std::vector<std::string>> rh;
    for (int t = 0; t < static_cast<int>(rep.mppi_fixed.size()); ++t) {
      const RhatResult r = rhat(file.chains, {CoefficientFamily::Fixed, t});
      rh.push_back({term_label(file.x_names, t), term_kind_name(term_kind(t)), format_number(r.value, 4),
                    format_number(r.inclusion, 4), r.low_inclusion ? "1" : "0"});
    }
    for (int d = 0; d < static_cast<int>(rep.mppi_random.size()); ++d) {
      const RhatResult r = rhat(file.chains, {CoefficientFamily::Random, d});
      rh.push_back({file.z_names[static_cast<std::size_t>(d)], "random", format_number(r.value, 4),
                    format_number(r.inclusion, 4), r.low_inclusion ? "1" : "0"});
    }
    write_table((dir / "rhat.tsv").string(), {"term", "kind", "rhat", "inclusion", "low_inclusion"}, rh);
    std::cout << "mppi correlation (chains 0, 1): " << mppi_correlation(file.chains[0], file.chains[1]) << "\n";
  }
  std::cout << "wrote summaries to " << out_dir << "\n";
  return 0;
}

int cmd_loo(const std::string& draws_path, const std::string& data_path, const std::string& pointwise,
            std::uint64_t seed) {
  const DrawsFile file = read_draws(draws_path);
  const Dataset data = load_dataset(data_path, file.load);
  if (data.x_names != file.x_names || data.z_names != file.z_names)
    throw std::invalid_argument("data columns do not match the draws file");
  const SplineReparam rp = training_reparam(file, data);
  const Model model(data, rp, file.hp);
  const auto draws = pool_snapshots(file.chains);
  for (const ParamState* s : draws)
    if (s->zeta.cols() != data.n_subjects()) throw std::invalid_argument("data subjects do not match the draws file");
  const LooReport loo = psis_loo(loglik_matrix(model, draws));
  std::cout << "elpd_loo\t" << format_number(loo.elpd, 8) << "\n";
  std::cout << "pareto_k_gt_0.7\t" << loo.n_high_k << "\t" << data.n_obs() << "\n";
  if (loo.n_high_k > 0) std::cerr << "warning: " << loo.n_high_k << " observations with Pareto k > 0.7\n";
  RngStream rng(seed, 23);
  for (const auto& r : posterior_predictive_check(model, draws, rng))
    std::cout << "ppc\t" << r.statistic << "\t" << format_number(r.observed) << "\t" << format_number(r.p_value, 4)
              << "\n";
  if (!pointwise.empty()) {
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index o = 0; o < loo.pointwise.size(); ++o)
      rows.push_back({std::to_string(o), format_number(loo.pointwise(o), 8), format_number(loo.pareto_k(o), 4)});
    write_table(pointwise, {"obs", "elpd", "pareto_k"}, rows);
  }
  return 0;
}

std::map<std::string, int> read_indicator_table(const std::string& path, const std::string& column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::istringstream h(line);
    std::string cell;
    while (std::getline(h, cell, '\t')) header.push_back(cell);
  }
  const auto it = std::find(header.begin(), header.end(), column);
  if (it == header.end() || header.size() < 3 || header[0] != "term" || header[1] != "kind")
    throw std::invalid_argument(path + ": expected columns term, kind, " + column);
  const auto col = static_cast<std::size_t>(it - header.begin());
  std::map<std::string, int> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream r(line);
    std::string cell;
    while (std::getline(r, cell, '\t')) cells.push_back(cell);
    if (cells.size() != header.size()) throw std::invalid_argument(path + ": ragged row");
    out[cells[0] + "\t" + cells[1]] = std::stoi(cells[col]);
  }
  return out;
}

int cmd_metrics(const std::string& selected_path, const std::string& truth_path) {
  const auto sel = read_indicator_table(selected_path, "selected");
  const auto truth = read_indicator_table(truth_path, "active");
  std::vector<int> fs, ft, rs, rt;
  for (const auto& [key, active] : truth) {
    const auto it = sel.find(key);
    if (it == sel.end()) throw std::invalid_argument("term missing from selection: " + key);
    const bool random = key.substr(key.find('\t') + 1) == "random";
    (random ? rs : fs).push_back(it->second);
    (random ? rt : ft).push_back(active);
  }
  std::cout << "family\tSENS\tSPEC\tMCC\n";
  auto show = [](const char* name, const std::vector<int>& s, const std::vector<int>& t) {
    if (t.empty()) return;
    const SelectionMetrics m = selection_metrics(s, t);
    std::cout << std::fixed << std::setprecision(3) << name << "\t" << m.sens << "\t" << m.spec << "\t" << m.mcc
              << "\n";
  };
  show("fixed", fs, ft);
  show("random", rs, rt);
  return 0;
}

int cmd_study(const RunFlags& f, int replicates, const std::string& variants, int workers, const std::string& out,
              const std::string& summary) {
  AppConfig cfg = resolve_config(f);
  StudyConfig sc;
  sc.design = cfg.design;
  sc.spline = cfg.spline;
  sc.run = cfg.run;
  if (f.iters == 0 && f.config.empty()) {
    sc.run.n_iter = 7500;
    sc.run.burn_in = 3750;
    sc.run.thin = 10;
  }
  sc.n_replicates = replicates;
  sc.seed = cfg.run.seed;
  sc.workers = workers;
  sc.verbose = true;
  if (variants == "default") {
    sc.variants = default_variants();
  } else if (variants == "sensitivity") {
    sc.variants = sensitivity_variants();
  } else if (variants == "order") {
    sc.variants = default_variants();
    sc.variants.erase(sc.variants.begin());
    StudyVariant perm = sc.variants[0];
    perm.name = "PGBVSDP_permuted_z";
    perm.permute_z = true;
    sc.variants.push_back(perm);
  } else {
    throw std::invalid_argument("unknown variant set " + variants + " (default, sensitivity, order)");
  }
  const auto rows = run_simulation_study(sc);
  std::vector<std::vector<std::string>> table;
  for (const auto& r : rows)
    table.push_back({std::to_string(r.replicate), r.variant, format_number(r.fsens, 4), format_number(r.fspec, 4),
                     format_number(r.fmcc, 4), format_number(r.rsens, 4), format_number(r.rspec, 4),
                     format_number(r.rmcc, 4), format_number(r.fclust, 4), format_number(r.rclust, 4),
                     format_number(r.seconds, 4), r.error.empty() ? "ok" : r.error});
  write_table(out, {"replicate", "variant", "fSENS", "fSPEC", "fMCC", "rSENS", "rSPEC", "rMCC", "fCLUST", "rCLUST",
                    "seconds", "status"},
              table);
  std::vector<std::vector<std::string>> agg;
  for (const auto& m : aggregate_study(rows))
    agg.push_back({m.variant, m.metric, format_number(m.mean, 3) + " (" + format_number(m.sd, 2) + ")",
                   std::to_string(m.n)});
  const std::vector<std::string> header{"variant", "metric", "mean_sd", "n"};
  if (!summary.empty()) write_table(summary, header, agg);
  print_rows(std::cout, header, agg);
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Bayesian time-varying effect models for binary longitudinal outcomes"};
  app.require_subcommand(1);
  RunFlags flags;
  auto seed_opt = [&](CLI::App* cmd) {
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& v) { flags.seed = v, flags.seed_set = true; }, "random seed");
  };

  auto* sim = app.add_subcommand("simulate", "generate one replicate of the simulation design");
  std::string sim_out = "simulated.csv", sim_truth;
  sim->add_option("--config", flags.config, "key = value config file");
  sim->add_option("--out", sim_out, "output CSV");
  sim->add_option("--truth", sim_truth, "output truth table");
  seed_opt(sim);

  auto* fit = app.add_subcommand("fit", "run the Gibbs sampler");
  std::string fit_data, fit_out = "draws.bin", fit_report;
  fit->add_option("--data", fit_data, "long-format CSV")->required();
  fit->add_option("--out", fit_out, "draws file");
  fit->add_option("--report", fit_report, "MPPI table output");
  fit->add_flag("--sort", flags.sort, "sort rows by (subject_id, time)");
  add_run_flags(fit, flags);
  seed_opt(fit);

  auto* sum = app.add_subcommand("summarize", "MPPI, curves, variances, clusters from a draws file");
  std::string sum_draws, sum_dir = "summary";
  int grid_points = 101;
  sum->add_option("--draws", sum_draws, "draws file")->required();
  sum->add_option("--out-dir", sum_dir, "output directory");
  sum->add_option("--grid-points", grid_points, "curve grid size")->check(CLI::Range(2, 100000));
  seed_opt(sum);

  auto* loo = app.add_subcommand("loo", "PSIS-LOO and posterior predictive checks");
  std::string loo_draws, loo_data, loo_pointwise;
  loo->add_option("--draws", loo_draws, "draws file")->required();
  loo->add_option("--data", loo_data, "long-format CSV used for the fit")->required();
  loo->add_option("--pointwise", loo_pointwise, "pointwise output table");
  seed_opt(loo);

  auto* met = app.add_subcommand("metrics", "SENS/SPEC/MCC of a selection against a truth table");
  std::string met_sel, met_truth;
  met->add_option("--selected", met_sel, "table with columns term, kind, selected")->required();
  met->add_option("--truth", met_truth, "table with columns term, kind, active")->required();

  auto* study = app.add_subcommand("study", "simulation / sensitivity / ordering study");
  int replicates = 10, workers = 1;
  std::string variants = "default", study_out = "study.tsv", study_summary;
  study->add_option("--replicates", replicates, "number of replicate datasets");
  study->add_option("--variants", variants, "default | sensitivity | order");
  study->add_option("--workers", workers, "concurrent replicate fits");
  study->add_option("--out", study_out, "per-replicate rows");
  study->add_option("--summary", study_summary, "aggregated mean (sd) table");
  add_run_flags(study, flags);
  seed_opt(study);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (*sim) return cmd_simulate(flags, sim_out, sim_truth);
    if (*fit) return cmd_fit(flags, fit_data, fit_out, fit_report);
    if (*sum) return cmd_summarize(sum_draws, sum_dir, grid_points, flags.seed);
    if (*loo) return cmd_loo(loo_draws, loo_data, loo_pointwise, flags.seed);
    if (*met) return cmd_metrics(met_sel, met_truth);
    if (*study) return cmd_study(flags, replicates, variants, workers, study_out, study_summary);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace tvem
