/*
 * Copyright 2026 The koopvar Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *
 */

// Experiment drivers: estimation-error and prediction-error sweeps over
// (bandwidth, m), CSV/JSON artifacts, the validation report and SVG plots.

#pragma once

#include "koopvar/bounds.hpp"
#include "koopvar/predictor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace koopvar {

struct ExperimentConfig {
  double alpha = 1.0;
  double lag = 0.05;
  std::vector<double> bandwidths{0.05, 0.1, 0.5};
  std::vector<long long> m_grid;
  int replicates_estimation = 200;
  int replicates_prediction = 20;
  double delta = 0.1;
  /// Mercer truncation by bandwidth; others use default_truncation.
  std::map<double, int> truncations{{0.05, 20}};
  int default_truncation = 10;
  int koopman_truncation = 15;
  std::uint64_t base_seed = 0;
  int quadrature_order = kDefaultQuadratureOrder;
  int validation_truncation = 256;
  std::size_t max_feature_points = 10000;
  bool record_timing = false;
  std::string preset = "full";

  ExperimentConfig();

  int mercer_truncation(double bandwidth) const;
  OuSystem<double> system() const { return {alpha, lag}; }
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// `count` log-spaced integers from lo to hi, rounded and deduplicated.
std::vector<long long> log_spaced_grid(long long lo, long long hi, int count);

ExperimentConfig preset_config(const std::string& name);

void to_json(nlohmann::json& j, const ExperimentConfig& cfg);
/// Fields absent from `j` keep their current values; unknown keys are rejected.
void apply_json(const nlohmann::json& j, ExperimentConfig& cfg);
/// Defaults of the preset (preset_override, else the file's "preset" key, else
/// "full"), then the remaining fields of the file.
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::optional<std::string>& preset_override = std::nullopt);

inline constexpr const char* kCsvHeader = "experiment,sigma,m,replicate,error,bound_exact,bound_coarse,bound_iid,runtime_s";

struct ResultRow {
  std::string experiment;
  double sigma = 0;
  long long m = 0;
  int replicate = 0;
  double error = 0;
  double bound_exact = 0;
  double bound_coarse = 0;
  double bound_iid = 0;
  double runtime_s = 0;
};

/// Shortest round-trip decimal.
std::string format_double(double v);
std::string csv_line(const ResultRow& row);
void write_csv(const std::vector<ResultRow>& rows, std::ostream& out);
void write_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path);
/// Throws std::runtime_error("schema error: ...") naming the offending column.
std::vector<ResultRow> read_csv(std::istream& in);
std::vector<ResultRow> read_csv(const std::filesystem::path& path);

/// Linear interpolation between order statistics.
double percentile(std::vector<double> values, double p);

/// Analytic objects shared by all cells of one bandwidth.
struct BandwidthContext {
  double sigma;
  int n_mercer;
  OuSystem<double> system;
  MercerBasis<double> basis;
  AnalyticCovariance cov;
};

BandwidthContext make_context(const ExperimentConfig& cfg, double sigma);

/// Seed of replicate r: base_seed + r.
std::uint64_t replicate_seed(const ExperimentConfig& cfg, int replicate);

struct EstimationBounds {
  double exact;
  double coarse;
  double iid;
};

/// Chebyshev radii at confidence 1 - delta from sigma_m^2, the coarse
/// variance bound e0(3 - q1)/(1 - q1) and the i.i.d. variance e0.
EstimationBounds estimation_bounds(const BandwidthContext& ctx, long long m, double delta);

/// Prediction bound (operator bound times ||phi_0||_H) with epsilon taken from
/// m >= 2 s^2/(eps^2 delta) for s^2 in {sigma_m^2, coarse, e0}.
EstimationBounds prediction_bounds(const BandwidthContext& ctx, long long m, double delta);
/// Whether epsilon < delta_N holds for the sigma_m^2-based epsilon.
bool prediction_hypothesis_holds(const BandwidthContext& ctx, long long m, double delta);

struct CellResult {
  std::vector<ResultRow> rows;  // replicate rows followed by summary rows
  nlohmann::json summary;
};

CellResult estimation_cell(const ExperimentConfig& cfg, const BandwidthContext& ctx, long long m, int replicates);
CellResult prediction_cell(const ExperimentConfig& cfg, const BandwidthContext& ctx, long long m, int replicates);

struct ExperimentResult {
  std::vector<ResultRow> rows;
  nlohmann::json summary;
};

/// Sweeps sigma ascending, m ascending; a failing cell becomes a single
/// "<experiment>_failed" row with NaN values and an entry in summary["errors"].
ExperimentResult run_estimation_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);
ExperimentResult run_prediction_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

/// Writes <name>.csv and <name>_summary.json into `dir`.
void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir, const std::string& name);

struct ValidationCheck {
  std::string name;
  std::string status;  // pass, fail or info
  double value = 0;
  double tolerance = 0;
  nlohmann::json detail;
};

std::vector<ValidationCheck> run_validation_suite(const ExperimentConfig& cfg);
nlohmann::json validation_report(const std::vector<ValidationCheck>& checks, const ExperimentConfig& cfg);

enum class PlotKind { estimation, prediction, unknown };

struct PlotOutput {
  std::filesystem::path path;
  PlotKind kind;
  int series;
};

/// Renders one log-log SVG per CSV next to `out_dir` (<stem>.svg).
PlotOutput emit_plot(const std::filesystem::path& csv, const std::filesystem::path& out_dir);
std::vector<PlotOutput> emit_plots(const std::vector<std::filesystem::path>& csvs, const std::filesystem::path& out_dir);
/// SVG text for the given rows.
std::string render_svg(const std::vector<ResultRow>& rows, const std::string& title, PlotKind* kind = nullptr,
                       int* series = nullptr);

}  // namespace koopvar
