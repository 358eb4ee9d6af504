#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "prevfuse/mcml.hpp"
#include "prevfuse/predict.hpp"
#include "prevfuse/simstudy.hpp"

namespace prevfuse {

inline constexpr const char* kVersion = "0.3.0";

/// Sectioned key=value configuration document. Lines starting with '#' or ';'
/// are comments; keys must be unique within their section.
class IniDoc {
 public:
  static IniDoc parse_string(const std::string& text,
                             const std::string& origin = "<string>");
  static IniDoc parse_file(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  std::string require(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  int get_int(const std::string& section, const std::string& key, int fallback) const;
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const;
  std::uint64_t get_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback) const;
  /// Comma-separated values; missing key yields an empty list.
  std::vector<double> get_doubles(const std::string& section,
                                  const std::string& key) const;
  std::vector<int> get_ints(const std::string& section, const std::string& key) const;
  std::vector<std::string> get_names(const std::string& section,
                                     const std::string& key) const;

  const std::vector<std::array<std::string, 3>>& entries() const { return entries_; }

 private:
  std::vector<std::array<std::string, 3>> entries_;  // section, key, value
};

/// FNV-1a over the sorted (section, key, value) triples, so formatting and
/// comments never change the hash and any meaningful edit does.
std::string config_hash(const IniDoc& doc);

struct RunConfig {
  IniDoc doc;
  std::string hash;
  std::uint64_t seed = 1;
  int threads = 1;

  // [model]
  std::vector<bool> biased;
  std::vector<std::string> use_covariates;   // empty: every column in the file
  std::vector<std::string> bias_covariates;  // "intercept" or covariate names
  bool standardize = false;
  bool tie_tau2 = true;
  std::optional<double> fixed_tau2;

  ChainConfig chain;        // [chain]
  FitConfig fitcfg;         // [mcml]; chain and seed filled by the commands
  BootstrapConfig bootcfg;  // [bootstrap]
};

RunConfig load_run_config(const std::string& path);

struct LoadedData {
  SurveyDataset data;
  std::vector<int> time_index;  // one entry per survey
};

/// Canonical data schema: survey_id, time_index, x, y, m, count, covariates.
LoadedData read_data_csv(const std::string& path);
void write_data_csv(const std::string& path, const SurveyDataset& data,
                    const std::vector<int>& time_index,
                    const std::vector<std::string>& meta);

struct IngestResult {
  SurveyDataset data;
  ModelSpec spec;
  RunConfig run;
};

/// Validated in-memory objects from a data file plus a config file. Applies
/// the covariate selection and optional standardization requested in [model].
IngestResult ingest(const std::string& data_path, const std::string& config_path);

struct LoadedGrid {
  MatrixXd loc;
  MatrixXd covariates;
  std::vector<std::string> names;
};

LoadedGrid read_grid_csv(const std::string& path);

/// Reorders grid covariates into the model's column order by name.
PredictionGrid make_prediction_grid(const LoadedGrid& grid, const SurveyDataset& data,
                                    int target_survey, bool include_nugget);

struct ReportMeta {
  std::string command;
  std::uint64_t seed = 0;
  std::string config_hash;
};

struct ReportRow {
  std::string name;   // beta1, sigma2, nu2_3, alpha_12, ...
  std::string label;  // design column or structural note
  double estimate = 0.0;
  double lower = std::numeric_limits<double>::quiet_NaN();
  double upper = std::numeric_limits<double>::quiet_NaN();
  int layout_index = -1;  // -1 for parameters held fixed
};

/// Rows in report order: beta block, sigma2, tau2, nu2, alpha, phi, delta
/// (bias-field parameters only when the model has a biased survey).
std::vector<ReportRow> report_rows(const FitResult& fit, const SurveyDataset& data,
                                   const ModelSpec& spec);

/// 95% intervals from the inverse observed information, symmetric on the
/// transformed scale and mapped back. No-op if the information is indefinite.
void add_asymptotic_intervals(std::vector<ReportRow>& rows, const FitResult& fit,
                              const SurveyDataset& data, const ModelSpec& spec);

/// Replaces intervals with parametric-bootstrap percentile intervals.
void add_bootstrap_intervals(std::vector<ReportRow>& rows,
                             const BootstrapResult& boot);

std::string fit_report_text(const std::vector<ReportRow>& rows, const FitResult& fit);

void write_fit_report_json(const std::string& path, const std::vector<ReportRow>& rows,
                           const FitResult& fit, const SurveyDataset& data,
                           const ModelSpec& spec, const ReportMeta& meta,
                           const BootstrapResult* bootstrap);

void write_prediction_csv(const std::string& path, const PredictionGrid& grid,
                          const PredictiveSummary& summary, const ReportMeta& meta);

void write_metrics_csv(const std::string& path, const std::string& scenario_label,
                       const MetricsTable& table, const ReportMeta& meta);

std::string error_json(const std::string& command, const std::string& message);

/// Synthetic dataset described by the [simulate] config section: either one
/// of the named study scenarios or a custom model drawn on a rectangle.
LoadedData simulate_cli_dataset(const RunConfig& run, std::uint64_t seed);

}  // namespace prevfuse
