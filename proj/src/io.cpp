#include "tvem/io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace tvem {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  if (s.empty()) throw std::invalid_argument("missing value in " + what);
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad number '" + s + "' in " + what);
  }
  if (pos != s.size()) throw std::invalid_argument("bad number '" + s + "' in " + what);
  return v;
}

int find_column(const std::vector<std::string>& names, const std::string& name) {
  const auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

struct Row {
  std::string subject;
  double time;
  int outcome;
  std::vector<double> cov;
  std::size_t line;
};

}  // namespace

LongTable read_long_csv(const std::string& path, bool sort) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument(path + ": empty file");
  const std::vector<std::string> header = split(line, ',');
  const int c_id = find_column(header, "subject_id");
  const int c_time = find_column(header, "time");
  const int c_out = find_column(header, "outcome");
  if (c_id < 0) throw std::invalid_argument(path + ": missing column subject_id");
  if (c_time < 0) throw std::invalid_argument(path + ": missing column time");
  if (c_out < 0) throw std::invalid_argument(path + ": missing column outcome");
  LongTable table;
  std::vector<int> cov_cols;
  for (int k = 0; k < static_cast<int>(header.size()); ++k) {
    if (k == c_id || k == c_time || k == c_out) continue;
    table.covariates.push_back(header[k]);
    cov_cols.push_back(k);
  }

  std::vector<Row> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split(line, ',');
    if (cells.size() != header.size())
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected " +
                                  std::to_string(header.size()) + " fields");
    const std::string where = path + ":" + std::to_string(lineno);
    Row r;
    r.subject = cells[c_id];
    if (r.subject.empty()) throw std::invalid_argument(where + ": missing subject_id");
    r.time = parse_double(cells[c_time], where);
    const double y = parse_double(cells[c_out], where);
    if (y != 0.0 && y != 1.0) throw std::invalid_argument(where + ": outcome must be 0 or 1");
    r.outcome = static_cast<int>(y);
    for (int k : cov_cols) r.cov.push_back(parse_double(cells[k], where + " column " + header[k]));
    r.line = lineno;
    rows.push_back(std::move(r));
  }

  // subjects keep their first-appearance order
  std::map<std::string, std::size_t> first;
  for (std::size_t i = 0; i < rows.size(); ++i) first.emplace(rows[i].subject, first.size());
  auto key_less = [&](const Row& a, const Row& b) {
    const std::size_t fa = first[a.subject], fb = first[b.subject];
    return fa != fb ? fa < fb : a.time < b.time;
  };
  if (sort) {
    std::stable_sort(rows.begin(), rows.end(), key_less);
  } else {
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const bool same = rows[i].subject == rows[i - 1].subject;
      if ((same && rows[i].time < rows[i - 1].time) || (!same && first[rows[i].subject] < first[rows[i - 1].subject]))
        throw std::invalid_argument(path + ":" + std::to_string(rows[i].line) +
                                    ": rows not ordered by (subject_id, time); pass --sort");
    }
  }

  const auto p = static_cast<Eigen::Index>(cov_cols.size());
  for (std::size_t i = 0; i < rows.size();) {
    std::size_t j = i;
    while (j < rows.size() && rows[j].subject == rows[i].subject) ++j;
    SubjectSeries s;
    s.id = rows[i].subject;
    const auto n = static_cast<Eigen::Index>(j - i);
    s.x.resize(n, p);
    for (std::size_t k = i; k < j; ++k) {
      s.u.push_back(rows[k].time);
      s.outcome.push_back(rows[k].outcome);
      for (Eigen::Index c = 0; c < p; ++c) s.x(static_cast<Eigen::Index>(k - i), c) = rows[k].cov[c];
    }
    if (n < 2) throw std::invalid_argument(path + ": subject " + s.id + " has fewer than 2 rows");
    table.subjects.push_back(std::move(s));
    i = j;
  }
  return table;
}

Dataset build_dataset(const LongTable& table, const LoadOptions& opts) {
  std::vector<std::string> xs = opts.x_columns.empty() ? table.covariates : opts.x_columns;
  std::vector<std::string> zs = opts.z_columns.empty() ? xs : opts.z_columns;
  const bool have_intercept = find_column(table.covariates, "intercept") >= 0;
  auto front_intercept = [&](std::vector<std::string>& names) {
    const int k = find_column(names, "intercept");
    if (k > 0) std::rotate(names.begin(), names.begin() + k, names.begin() + k + 1);
    if (k < 0 && opts.add_intercept) names.insert(names.begin(), "intercept");
  };
  front_intercept(xs);
  if (opts.z_columns.empty()) zs = xs;
  else front_intercept(zs);

  auto column_of = [&](const std::string& name) {
    const int k = find_column(table.covariates, name);
    if (k < 0 && !(name == "intercept" && !have_intercept)) throw std::invalid_argument("missing column " + name);
    return k;
  };
  std::vector<int> xi, zi;
  for (const auto& n : xs) xi.push_back(column_of(n));
  for (const auto& n : zs) zi.push_back(column_of(n));
  for (const auto& n : opts.standardize)
    if (find_column(xs, n) < 0 && find_column(zs, n) < 0) throw std::invalid_argument("standardize: unknown column " + n);

  std::vector<SubjectSeries> series;
  for (const auto& s : table.subjects) {
    SubjectSeries out;
    out.id = s.id;
    out.outcome = s.outcome;
    for (double t : s.u) out.u.push_back(t - opts.center_time);
    const auto n = static_cast<Eigen::Index>(s.u.size());
    auto pick = [&](const std::vector<int>& cols) {
      Eigen::MatrixXd m(n, static_cast<Eigen::Index>(cols.size()));
      for (std::size_t c = 0; c < cols.size(); ++c)
        m.col(static_cast<Eigen::Index>(c)) = cols[c] < 0 ? Eigen::VectorXd::Ones(n) : Eigen::VectorXd(s.x.col(cols[c]));
      return m;
    };
    out.x = pick(xi);
    out.z = pick(zi);
    for (const auto& name : opts.time_invariant) {
      const int k = find_column(table.covariates, name);
      if (k < 0) throw std::invalid_argument("time_invariant: unknown column " + name);
      if ((s.x.col(k).array() != s.x(0, k)).any())
        throw std::invalid_argument("column " + name + " varies within subject " + s.id);
    }
    series.push_back(std::move(out));
  }
  Dataset data = make_lagged_dataset(series, xs, zs);
  if (!opts.standardize.empty()) standardize_columns(data, opts.standardize);
  return data;
}

Dataset load_dataset(const std::string& path, const LoadOptions& opts) {
  return build_dataset(read_long_csv(path, opts.sort), opts);
}

void write_long_csv(const std::string& path, const std::vector<SubjectSeries>& subjects,
                    const std::vector<std::string>& covariates) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "subject_id,time,outcome";
  for (const auto& c : covariates) out << "," << c;
  out << "\n" << std::setprecision(17);
  for (const auto& s : subjects) {
    for (std::size_t j = 0; j < s.u.size(); ++j) {
      out << s.id << "," << s.u[j] << "," << s.outcome[j];
      for (Eigen::Index c = 0; c < s.x.cols(); ++c) out << "," << s.x(static_cast<Eigen::Index>(j), c);
      out << "\n";
    }
  }
}

// ---- config

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config " + key + ": expected true/false");
}

int parse_int(const std::string& v, const std::string& key) {
  const double d = parse_double(v, "config " + key);
  if (d != std::floor(d)) throw std::invalid_argument("config " + key + ": expected an integer");
  return static_cast<int>(d);
}

std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  for (auto& s : split(v, ','))
    if (!s.empty()) out.push_back(s);
  return out;
}

std::vector<double> parse_numbers(const std::string& v, const std::string& key) {
  std::vector<double> out;
  for (const auto& s : parse_list(v)) out.push_back(parse_double(s, "config " + key));
  return out;
}

}  // namespace

void apply_config(const std::map<std::string, std::string>& kv, AppConfig& cfg) {
  for (const auto& [key, v] : kv) {
    auto num = [&] { return parse_double(v, "config " + key); };
    Hyperparams& h = cfg.hp;
    if (key == "tau2") h.tau2 = num();
    else if (key == "m0") h.m0 = num();
    else if (key == "v0") h.v0 = num();
    else if (key == "a_nu") h.a_nu = num();
    else if (key == "b_nu") h.b_nu = num();
    else if (key == "a_lambda") h.a_lambda = num();
    else if (key == "b_lambda") h.b_lambda = num();
    else if (key == "a_theta") h.a_theta = num();
    else if (key == "b_theta") h.b_theta = num();
    else if (key == "a_A") h.a_A = num();
    else if (key == "b_A") h.b_A = num();
    else if (key == "dp_fixed") h.dp_fixed = parse_bool(v, key);
    else if (key == "dp_random") h.dp_random = parse_bool(v, key);
    else if (key == "gamma0") {
      const auto xs = parse_numbers(v, key);
      h.gamma0 = Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    } else if (key == "V_gamma") {
      const auto xs = parse_numbers(v, key);
      const auto n = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(xs.size()))));
      if (n * n != static_cast<Eigen::Index>(xs.size())) throw std::invalid_argument("config V_gamma: not square");
      h.V_gamma = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(xs.data(), n, n);
    }
    else if (key == "n_basis") cfg.spline.n_basis = parse_int(v, key);
    else if (key == "variance_kept") cfg.spline.variance_kept = num();
    else if (key == "degree") cfg.spline.degree = parse_int(v, key);
    else if (key == "n_iter") cfg.run.n_iter = parse_int(v, key);
    else if (key == "burn_in") cfg.run.burn_in = parse_int(v, key);
    else if (key == "thin") cfg.run.thin = parse_int(v, key);
    else if (key == "n_chains") cfg.run.n_chains = parse_int(v, key);
    else if (key == "seed") cfg.run.seed = static_cast<std::uint64_t>(parse_int(v, key));
    else if (key == "progress_every") cfg.run.progress_every = parse_int(v, key);
    else if (key == "x_columns") cfg.load.x_columns = parse_list(v);
    else if (key == "z_columns") cfg.load.z_columns = parse_list(v);
    else if (key == "standardize") cfg.load.standardize = parse_list(v);
    else if (key == "time_invariant") cfg.load.time_invariant = parse_list(v);
    else if (key == "center_time") cfg.load.center_time = num();
    else if (key == "sort") cfg.load.sort = parse_bool(v, key);
    else if (key == "add_intercept") cfg.load.add_intercept = parse_bool(v, key);
    else if (key == "n_subjects") cfg.design.n_subjects = parse_int(v, key);
    else if (key == "min_assessments") cfg.design.min_assessments = parse_int(v, key);
    else if (key == "max_assessments") cfg.design.max_assessments = parse_int(v, key);
    else if (key == "n_covariates") cfg.design.n_covariates = parse_int(v, key);
    else if (key == "ar_weight") cfg.design.ar_weight = num();
    else if (key == "jitter_prob") cfg.design.jitter_prob = num();
    else if (key == "re_variance") cfg.design.re_variance = num();
    else if (key == "re_covariance") cfg.design.re_covariance = num();
    else if (key == "n_active_random") cfg.design.n_active_random = parse_int(v, key);
    else throw std::invalid_argument("config: unknown key " + key);
  }
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  AppConfig cfg;
  apply_config(parse_key_values(buf.str()), cfg);
  return cfg;
}

// ---- draws container

namespace {

constexpr char kMagic[8] = {'T', 'V', 'E', 'M', 'D', 'R', 'A', 'W'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("draws file truncated");
  return v;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd json_matrix(const json& j, Eigen::Index cols_if_empty = 0) {
  const auto r = static_cast<Eigen::Index>(j.size());
  if (r == 0) return Eigen::MatrixXd(0, cols_if_empty);
  const auto c = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index k = 0; k < c; ++k) m(i, k) = j[i][k].get<double>();
  return m;
}

json hp_json(const Hyperparams& h) {
  return {{"tau2", h.tau2},         {"m0", h.m0},           {"v0", h.v0},
          {"a_nu", h.a_nu},         {"b_nu", h.b_nu},       {"a_lambda", h.a_lambda},
          {"b_lambda", h.b_lambda}, {"a_theta", h.a_theta}, {"b_theta", h.b_theta},
          {"a_A", h.a_A},           {"b_A", h.b_A},         {"dp_fixed", h.dp_fixed},
          {"dp_random", h.dp_random}};
}

Hyperparams json_hp(const json& j) {
  Hyperparams h;
  h.tau2 = j.at("tau2"), h.m0 = j.at("m0"), h.v0 = j.at("v0");
  h.a_nu = j.at("a_nu"), h.b_nu = j.at("b_nu");
  h.a_lambda = j.at("a_lambda"), h.b_lambda = j.at("b_lambda");
  h.a_theta = j.at("a_theta"), h.b_theta = j.at("b_theta");
  h.a_A = j.at("a_A"), h.b_A = j.at("b_A");
  h.dp_fixed = j.at("dp_fixed"), h.dp_random = j.at("dp_random");
  return h;
}

struct Column {
  std::string name;
  std::size_t width;
};

}  // namespace

void write_draws(const std::string& path, const DrawsFile& file) {
  std::vector<const ParamState*> snaps;
  std::vector<double> chain_of;
  for (const auto& c : file.chains)
    for (const auto& s : c.snapshots) {
      snaps.push_back(&s);
      chain_of.push_back(c.chain_id);
    }
  const std::size_t t = snaps.empty() ? 0 : snaps[0]->nu.size();
  const std::size_t d = snaps.empty() ? 0 : snaps[0]->lambda.size();
  const std::size_t r = snaps.empty() ? 0 : static_cast<std::size_t>(snaps[0]->xi.rows());
  const std::size_t p = t / 3;
  const std::size_t n = snaps.empty() ? 0 : static_cast<std::size_t>(snaps[0]->zeta.cols());
  const std::vector<Column> cols{{"chain", 1},  {"beta", t},        {"nu", t},         {"xi", r * p},
                                 {"mu", r * p}, {"kappa", d},       {"lambda", d},     {"gamma", d * d},
                                 {"zeta", d * n}, {"c_beta", t},    {"c_kappa", d},    {"vartheta", 1},
                                 {"a_conc", 1}};
  json header;
  header["n_snapshots"] = snaps.size();
  header["layout"] = {{"n_terms", t}, {"n_random", d}, {"rank", r}, {"n_fixed", p}, {"n_subjects", n}};
  json jc = json::array();
  for (const auto& c : cols) jc.push_back({{"name", c.name}, {"width", c.width}});
  header["columns"] = jc;
  json chains = json::array();
  for (const auto& c : file.chains)
    chains.push_back({{"chain_id", c.chain_id}, {"seed", c.seed}, {"burn_in", c.burn_in}, {"thin", c.thin},
                      {"n_snapshots", c.snapshots.size()}, {"loglik_trace", c.loglik_trace}});
  header["chains"] = chains;
  header["x_names"] = file.x_names;
  header["z_names"] = file.z_names;
  json sc = json::array();
  for (const auto& s : file.scaling)
    sc.push_back({{"name", s.name}, {"standardized", s.standardized}, {"mean", s.mean}, {"sd", s.sd}});
  header["scaling"] = sc;
  header["spline"] = {{"lower", file.reparam.basis.lower()},
                      {"upper", file.reparam.basis.upper()},
                      {"n_basis", file.reparam.basis.n_basis()},
                      {"degree", file.reparam.basis.degree()},
                      {"projection", matrix_json(file.reparam.projection)}};
  header["hyperparams"] = hp_json(file.hp);
  header["load"] = {{"x_columns", file.load.x_columns},         {"z_columns", file.load.z_columns},
                    {"standardize", file.load.standardize},     {"time_invariant", file.load.time_invariant},
                    {"center_time", file.load.center_time},     {"sort", file.load.sort},
                    {"add_intercept", file.load.add_intercept}};
  header["n_subjects"] = file.n_subjects;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kMagic, 8);
  put<std::uint32_t>(out, kDrawsVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));

  std::vector<double> row;
  for (const auto& col : cols) {
    for (std::size_t s = 0; s < snaps.size(); ++s) {
      const ParamState& st = *snaps[s];
      row.clear();
      if (col.name == "chain") row.push_back(chain_of[s]);
      else if (col.name == "beta") row.assign(st.beta.data(), st.beta.data() + st.beta.size());
      else if (col.name == "nu") row.assign(st.nu.begin(), st.nu.end());
      else if (col.name == "xi") row.assign(st.xi.data(), st.xi.data() + st.xi.size());
      else if (col.name == "mu") row.assign(st.mu.data(), st.mu.data() + st.mu.size());
      else if (col.name == "kappa") row.assign(st.kappa.data(), st.kappa.data() + st.kappa.size());
      else if (col.name == "lambda") row.assign(st.lambda.begin(), st.lambda.end());
      else if (col.name == "gamma") row.assign(st.gamma.data(), st.gamma.data() + st.gamma.size());
      else if (col.name == "zeta") row.assign(st.zeta.data(), st.zeta.data() + st.zeta.size());
      else if (col.name == "c_beta") row.assign(st.c_beta.begin(), st.c_beta.end());
      else if (col.name == "c_kappa") row.assign(st.c_kappa.begin(), st.c_kappa.end());
      else if (col.name == "vartheta") row.push_back(st.vartheta);
      else if (col.name == "a_conc") row.push_back(st.a_conc);
      if (row.size() != col.width) throw std::logic_error("write_draws: ragged column " + col.name);
      for (double v : row) put<double>(out, v);
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

DrawsFile read_draws(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error(path + ": not a draws file");
  const auto version = get<std::uint32_t>(in);
  if (version != kDrawsVersion) throw std::runtime_error(path + ": unsupported draws version " + std::to_string(version));
  const auto len = get<std::uint64_t>(in);
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw std::runtime_error("draws file truncated");
  const json header = json::parse(text);

  DrawsFile file;
  file.x_names = header.at("x_names").get<std::vector<std::string>>();
  file.z_names = header.at("z_names").get<std::vector<std::string>>();
  for (const auto& s : header.at("scaling"))
    file.scaling.push_back({s.at("name"), s.at("standardized"), s.at("mean"), s.at("sd")});
  const json& sp = header.at("spline");
  file.reparam.basis = BSplineBasis(sp.at("lower"), sp.at("upper"), sp.at("n_basis"), sp.at("degree"));
  file.reparam.projection = json_matrix(sp.at("projection"));
  file.hp = json_hp(header.at("hyperparams"));
  const json& ld = header.at("load");
  file.load.x_columns = ld.at("x_columns").get<std::vector<std::string>>();
  file.load.z_columns = ld.at("z_columns").get<std::vector<std::string>>();
  file.load.standardize = ld.at("standardize").get<std::vector<std::string>>();
  file.load.time_invariant = ld.at("time_invariant").get<std::vector<std::string>>();
  file.load.center_time = ld.at("center_time");
  file.load.sort = ld.at("sort");
  file.load.add_intercept = ld.at("add_intercept");
  file.n_subjects = header.at("n_subjects");

  const json& lay = header.at("layout");
  const auto t = lay.at("n_terms").get<Eigen::Index>();
  const auto d = lay.at("n_random").get<Eigen::Index>();
  const auto r = lay.at("rank").get<Eigen::Index>();
  const auto p = lay.at("n_fixed").get<Eigen::Index>();
  const auto n = lay.at("n_subjects").get<Eigen::Index>();
  const auto ns = header.at("n_snapshots").get<std::size_t>();

  std::vector<ParamState> snaps(ns);
  std::vector<int> chain_of(ns);
  for (auto& s : snaps) {
    s.beta.resize(t), s.nu.resize(t), s.xi.resize(r, p), s.mu.resize(r, p), s.kappa.resize(d);
    s.lambda.resize(d), s.gamma.resize(d, d), s.zeta.resize(d, n), s.c_beta.resize(t), s.c_kappa.resize(d);
  }
  for (const auto& col : header.at("columns")) {
    const std::string name = col.at("name");
    const auto width = col.at("width").get<std::size_t>();
    std::vector<double> row(width);
    for (std::size_t s = 0; s < ns; ++s) {
      for (auto& v : row) v = get<double>(in);
      ParamState& st = snaps[s];
      auto to_int = [&](std::vector<int>& dst) {
        for (std::size_t k = 0; k < width; ++k) dst[k] = static_cast<int>(row[k]);
      };
      auto to_eigen = [&](auto& dst) {
        if (static_cast<std::size_t>(dst.size()) != width) throw std::runtime_error("draws: column width mismatch " + name);
        std::copy(row.begin(), row.end(), dst.data());
      };
      if (name == "chain") chain_of[s] = static_cast<int>(row[0]);
      else if (name == "beta") to_eigen(st.beta);
      else if (name == "nu") to_int(st.nu);
      else if (name == "xi") to_eigen(st.xi);
      else if (name == "mu") to_eigen(st.mu);
      else if (name == "kappa") to_eigen(st.kappa);
      else if (name == "lambda") to_int(st.lambda);
      else if (name == "gamma") to_eigen(st.gamma);
      else if (name == "zeta") to_eigen(st.zeta);
      else if (name == "c_beta") to_int(st.c_beta);
      else if (name == "c_kappa") to_int(st.c_kappa);
      else if (name == "vartheta") st.vartheta = row[0];
      else if (name == "a_conc") st.a_conc = row[0];
    }
  }
  for (const auto& c : header.at("chains")) {
    PosteriorDraws pd;
    pd.chain_id = c.at("chain_id");
    pd.seed = c.at("seed");
    pd.burn_in = c.at("burn_in");
    pd.thin = c.at("thin");
    pd.loglik_trace = c.at("loglik_trace").get<std::vector<double>>();
    file.chains.push_back(std::move(pd));
  }
  for (std::size_t s = 0; s < ns; ++s) {
    auto it = std::find_if(file.chains.begin(), file.chains.end(), [&](const PosteriorDraws& c) { return c.chain_id == chain_of[s]; });
    if (it == file.chains.end()) throw std::runtime_error("draws: snapshot of unknown chain");
    it->snapshots.push_back(std::move(snaps[s]));
  }
  return file;
}

void write_table(const std::string& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "\t" : "") << header[k];
  out << "\n";
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.size(); ++k) out << (k ? "\t" : "") << r[k];
    out << "\n";
  }
}

std::string format_number(double v, int precision) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

}  // namespace tvem
