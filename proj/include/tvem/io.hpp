#pragma once

#include <map>
#include <string>
#include <vector>

#include "tvem/model.hpp"
#include "tvem/sampler.hpp"
#include "tvem/simulation.hpp"
#include "tvem/spline.hpp"

namespace tvem {

/// Columns subject_id, time, outcome plus named covariates.
struct LoadOptions {
  std::vector<std::string> x_columns;  // empty: every covariate column
  std::vector<std::string> z_columns;  // empty: same as x
  std::vector<std::string> standardize;
  std::vector<std::string> time_invariant;  // checked constant within subject
  double center_time = 0.0;                 // subtracted from time
  bool sort = false;                        // sort rows instead of rejecting disorder
  /// Prepend a column of ones named "intercept" to x (and z) when absent.
  bool add_intercept = true;
};

/// Raw long-format table.
struct LongTable {
  std::vector<std::string> covariates;
  std::vector<SubjectSeries> subjects;  // x holds every covariate column
};

LongTable read_long_csv(const std::string& path, bool sort);
Dataset build_dataset(const LongTable& table, const LoadOptions& opts);
Dataset load_dataset(const std::string& path, const LoadOptions& opts);

void write_long_csv(const std::string& path, const std::vector<SubjectSeries>& subjects,
                    const std::vector<std::string>& covariates);

struct AppConfig {
  Hyperparams hp;
  SplineConfig spline;
  RunConfig run;
  LoadOptions load;
  SimDesign design;
};

/// Flat `key = value` text; `#` starts a comment; lists are comma separated.
std::map<std::string, std::string> parse_key_values(const std::string& text);
void apply_config(const std::map<std::string, std::string>& kv, AppConfig& cfg);
AppConfig load_config(const std::string& path);

struct DrawsFile {
  std::vector<PosteriorDraws> chains;
  std::vector<std::string> x_names;
  std::vector<std::string> z_names;
  std::vector<ColumnScaling> scaling;
  SplineReparam reparam;  // basis + projection only
  Hyperparams hp;
  LoadOptions load;
  int n_subjects = 0;
};

constexpr std::uint32_t kDrawsVersion = 1;

void write_draws(const std::string& path, const DrawsFile& file);
DrawsFile read_draws(const std::string& path);

/// Tab-separated table with a header row.
void write_table(const std::string& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows);
std::string format_number(double v, int precision = 6);

}  // namespace tvem
