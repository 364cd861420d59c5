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

#include "koopvar/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace koopvar {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

constexpr const char* kColumns[] = {"experiment", "sigma",        "m",        "replicate", "error",
                                    "bound_exact", "bound_coarse", "bound_iid", "runtime_s"};
constexpr std::size_t kColumnCount = std::size(kColumns);

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

template <typename T>
T parse_field(const std::string& text, std::size_t column, std::size_t row) {
  T v{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  const auto res = std::from_chars(first, last, v);
  if (text.empty() || res.ec != std::errc() || res.ptr != last) {
    std::ostringstream msg;
    msg << "schema error: column '" << kColumns[column] << "' in row " << row << ": cannot parse '" << text << "'";
    throw std::runtime_error(msg.str());
  }
  return v;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ResultRow failed_row(const std::string& experiment, double sigma, long long m) {
  return {experiment + "_failed", sigma, m, -1, kNaN, kNaN, kNaN, kNaN, 0};
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0;
  const double mu = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / double(v.size() - 1));
}

template <typename Cell>
ExperimentResult sweep(const ExperimentConfig& cfg, const std::string& name, int replicates, Cell&& cell,
                       std::ostream* log) {
  cfg.validate();
  ExperimentResult out;
  json config;
  to_json(config, cfg);
  out.summary["experiment"] = name;
  out.summary["config"] = config;
  out.summary["cells"] = json::array();
  out.summary["errors"] = json::array();

  std::vector<double> sigmas = cfg.bandwidths;
  std::sort(sigmas.begin(), sigmas.end());
  std::vector<long long> grid = cfg.m_grid;
  std::sort(grid.begin(), grid.end());

  for (double sigma : sigmas) {
    std::optional<BandwidthContext> ctx;
    std::string context_error;
    try {
      ctx.emplace(make_context(cfg, sigma));
    } catch (const std::exception& e) {
      context_error = e.what();
    }
    for (long long m : grid) {
      const auto t0 = std::chrono::steady_clock::now();
      try {
        if (!ctx) throw std::runtime_error(context_error);
        CellResult res = cell(cfg, *ctx, m, replicates);
        out.rows.insert(out.rows.end(), res.rows.begin(), res.rows.end());
        out.summary["cells"].push_back(std::move(res.summary));
      } catch (const std::exception& e) {
        out.rows.push_back(failed_row(name, sigma, m));
        out.summary["errors"].push_back({{"sigma", sigma}, {"m", m}, {"message", e.what()}});
      }
      if (log) *log << name << " sigma=" << sigma << " m=" << m << " (" << seconds_since(t0) << " s)\n";
    }
  }
  return out;
}

}  // namespace

ExperimentConfig::ExperimentConfig() : m_grid(log_spaced_grid(20, 50000, 12)) {}

int ExperimentConfig::mercer_truncation(double bandwidth) const {
  for (const auto& [sigma, n] : truncations)
    if (std::abs(sigma - bandwidth) <= 1e-12 * std::max(1.0, std::abs(sigma))) return n;
  return default_truncation;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("config: " + field + " " + why);
  };
  if (!(alpha > 0)) fail("alpha", "must be positive");
  if (!(lag > 0)) fail("lag", "must be positive");
  if (bandwidths.empty()) fail("bandwidths", "must not be empty");
  for (double s : bandwidths)
    if (!(s > 0)) fail("bandwidths", "must be positive");
  if (m_grid.empty()) fail("m_grid", "must not be empty");
  for (long long m : m_grid)
    if (m < 1) fail("m_grid", "entries must be at least 1");
  if (replicates_estimation < 1) fail("replicates_estimation", "must be at least 1");
  if (replicates_prediction < 1) fail("replicates_prediction", "must be at least 1");
  if (!(delta > 0 && delta < 1)) fail("delta", "must lie in (0, 1)");
  for (const auto& [s, n] : truncations)
    if (n < 1 || n >= kMaxHermiteDegree) fail("truncations", "must lie in [1, 511]");
  if (default_truncation < 1 || default_truncation >= kMaxHermiteDegree)
    fail("default_truncation", "must lie in [1, 511]");
  if (koopman_truncation < 2 || koopman_truncation > kMaxHermiteDegree)
    fail("koopman_truncation", "must lie in [2, 512]");
  if (quadrature_order < 2 || quadrature_order > kMaxQuadratureOrder) fail("quadrature_order", "must lie in [2, 512]");
  if (validation_truncation < 1 || validation_truncation > kMaxHermiteDegree)
    fail("validation_truncation", "must lie in [1, 512]");
  if (max_feature_points < 1) fail("max_feature_points", "must be at least 1");
}

std::vector<long long> log_spaced_grid(long long lo, long long hi, int count) {
  if (lo < 1 || hi < lo || count < 1) throw std::invalid_argument("log_spaced_grid: need 1 <= lo <= hi, count >= 1");
  std::vector<long long> out;
  for (int i = 0; i < count; ++i) {
    const double f = count == 1 ? 0.0 : double(i) / double(count - 1);
    const auto v = static_cast<long long>(std::llround(std::exp(std::log(double(lo)) * (1 - f) + std::log(double(hi)) * f)));
    if (out.empty() || v != out.back()) out.push_back(v);
  }
  out.back() = hi;
  return out;
}

ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig cfg;
  if (name == "full") return cfg;
  if (name == "quick") {
    cfg.preset = "quick";
    cfg.m_grid = log_spaced_grid(20, 5000, 9);
    cfg.replicates_estimation = 50;
    cfg.replicates_prediction = 20;
    return cfg;
  }
  throw std::invalid_argument("unknown preset '" + name + "' (expected quick or full)");
}

void to_json(json& j, const ExperimentConfig& cfg) {
  json trunc = json::object();
  for (const auto& [s, n] : cfg.truncations) trunc[format_double(s)] = n;
  j = json{{"preset", cfg.preset},
           {"alpha", cfg.alpha},
           {"lag", cfg.lag},
           {"bandwidths", cfg.bandwidths},
           {"m_grid", cfg.m_grid},
           {"replicates_estimation", cfg.replicates_estimation},
           {"replicates_prediction", cfg.replicates_prediction},
           {"delta", cfg.delta},
           {"truncations", trunc},
           {"default_truncation", cfg.default_truncation},
           {"koopman_truncation", cfg.koopman_truncation},
           {"base_seed", cfg.base_seed},
           {"quadrature_order", cfg.quadrature_order},
           {"validation_truncation", cfg.validation_truncation},
           {"max_feature_points", cfg.max_feature_points},
           {"record_timing", cfg.record_timing}};
}

void apply_json(const json& j, ExperimentConfig& cfg) {
  if (!j.is_object()) throw std::invalid_argument("config: document must be a JSON object");
  static const std::set<std::string> known{"preset",           "alpha",
                                           "lag",              "bandwidths",
                                           "m_grid",           "replicates_estimation",
                                           "replicates_prediction", "delta",
                                           "truncations",      "default_truncation",
                                           "koopman_truncation", "base_seed",
                                           "quadrature_order", "validation_truncation",
                                           "max_feature_points", "record_timing"};
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw std::invalid_argument("config: unknown field '" + key + "'");
  try {
    if (j.contains("preset")) cfg.preset = j.at("preset").get<std::string>();
    if (j.contains("alpha")) cfg.alpha = j.at("alpha").get<double>();
    if (j.contains("lag")) cfg.lag = j.at("lag").get<double>();
    if (j.contains("bandwidths")) cfg.bandwidths = j.at("bandwidths").get<std::vector<double>>();
    if (j.contains("m_grid")) cfg.m_grid = j.at("m_grid").get<std::vector<long long>>();
    if (j.contains("replicates_estimation")) cfg.replicates_estimation = j.at("replicates_estimation").get<int>();
    if (j.contains("replicates_prediction")) cfg.replicates_prediction = j.at("replicates_prediction").get<int>();
    if (j.contains("delta")) cfg.delta = j.at("delta").get<double>();
    if (j.contains("truncations")) {
      cfg.truncations.clear();
      for (const auto& [key, value] : j.at("truncations").items()) cfg.truncations[std::stod(key)] = value.get<int>();
    }
    if (j.contains("default_truncation")) cfg.default_truncation = j.at("default_truncation").get<int>();
    if (j.contains("koopman_truncation")) cfg.koopman_truncation = j.at("koopman_truncation").get<int>();
    if (j.contains("base_seed")) cfg.base_seed = j.at("base_seed").get<std::uint64_t>();
    if (j.contains("quadrature_order")) cfg.quadrature_order = j.at("quadrature_order").get<int>();
    if (j.contains("validation_truncation")) cfg.validation_truncation = j.at("validation_truncation").get<int>();
    if (j.contains("max_feature_points")) cfg.max_feature_points = j.at("max_feature_points").get<std::size_t>();
    if (j.contains("record_timing")) cfg.record_timing = j.at("record_timing").get<bool>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::optional<std::string>& preset_override) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  std::string preset = "full";
  if (j.is_object() && j.contains("preset") && j.at("preset").is_string()) preset = j.at("preset").get<std::string>();
  if (preset_override) preset = *preset_override;
  ExperimentConfig cfg = preset_config(preset);
  j.erase("preset");
  apply_json(j, cfg);
  cfg.validate();
  return cfg;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

std::string csv_line(const ResultRow& r) {
  std::string s = r.experiment;
  for (double v : {r.sigma}) s += "," + format_double(v);
  s += "," + std::to_string(r.m) + "," + std::to_string(r.replicate);
  for (double v : {r.error, r.bound_exact, r.bound_coarse, r.bound_iid, r.runtime_s}) s += "," + format_double(v);
  return s;
}

void write_csv(const std::vector<ResultRow>& rows, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) out << csv_line(r) << '\n';
}

void write_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_csv(rows, out);
}

std::vector<ResultRow> read_csv(std::istream& in) {
  std::vector<ResultRow> rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  line = strip_cr(line);
  if (line.empty()) return rows;
  const auto header = split(line, ',');
  for (std::size_t i = 0; i < kColumnCount; ++i) {
    if (i >= header.size()) throw std::runtime_error(std::string("schema error: missing column '") + kColumns[i] + "'");
    if (header[i] != kColumns[i])
      throw std::runtime_error("schema error: column " + std::to_string(i + 1) + " is '" + header[i] +
                               "', expected '" + kColumns[i] + "'");
  }
  if (header.size() > kColumnCount)
    throw std::runtime_error("schema error: unexpected column '" + header[kColumnCount] + "'");

  std::size_t row = 0;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    ++row;
    const auto f = split(line, ',');
    if (f.size() != kColumnCount) {
      const std::size_t col = std::min(f.size(), kColumnCount - 1);
      throw std::runtime_error("schema error: row " + std::to_string(row) + " has " + std::to_string(f.size()) +
                               " fields (column '" + kColumns[col] + "' missing or extra)");
    }
    ResultRow r;
    if (f[0].empty()) throw std::runtime_error("schema error: column 'experiment' in row " + std::to_string(row) + " is empty");
    r.experiment = f[0];
    r.sigma = parse_field<double>(f[1], 1, row);
    r.m = parse_field<long long>(f[2], 2, row);
    r.replicate = parse_field<int>(f[3], 3, row);
    r.error = parse_field<double>(f[4], 4, row);
    r.bound_exact = parse_field<double>(f[5], 5, row);
    r.bound_coarse = parse_field<double>(f[6], 6, row);
    r.bound_iid = parse_field<double>(f[7], 7, row);
    r.runtime_s = parse_field<double>(f[8], 8, row);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ResultRow> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_csv(in);
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile: no values");
  if (!(p >= 0 && p <= 1)) throw std::invalid_argument("percentile: p must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = p * double(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - double(lo)) * (values[hi] - values[lo]);
}

BandwidthContext make_context(const ExperimentConfig& cfg, double sigma) {
  const int n = cfg.mercer_truncation(sigma);
  const auto sys = cfg.system();
  MercerBasis<double> basis(cfg.alpha, sigma, n, cfg.quadrature_order);
  CovarianceOptions opt;
  opt.n_koopman = cfg.koopman_truncation;
  opt.quadrature_order = cfg.quadrature_order;
  auto cov = analytic_covariance(basis, sys, opt);
  return {sigma, n, sys, std::move(basis), std::move(cov)};
}

std::uint64_t replicate_seed(const ExperimentConfig& cfg, int replicate) {
  return cfg.base_seed + static_cast<std::uint64_t>(replicate);
}

EstimationBounds estimation_bounds(const BandwidthContext& ctx, long long m, double delta) {
  const ConfidenceQuery q{m, delta};
  const auto v = sigma_m_sq(ctx.cov, m);
  const auto coarse = coarse_sigma_bounds(ctx.cov.e0, ctx.cov.q[0], m);
  return {chebyshev_radius(v.sigma_m_sq, q), chebyshev_radius(coarse.remark, q),
          chebyshev_radius(ctx.cov.e0, {m, delta, VarianceSource::iid_e0})};
}

namespace {

PredictionBoundInputs prediction_inputs_for(const BandwidthContext& ctx, double epsilon) {
  const MercerBasis<double> wide(ctx.basis.alpha(), ctx.sigma, ctx.n_mercer + 1);
  return prediction_inputs(wide, ctx.n_mercer, epsilon, ctx.system);
}

double prediction_epsilon(double variance, long long m, double delta) {
  return chebyshev_radius(2 * variance, {m, delta});
}

}  // namespace

EstimationBounds prediction_bounds(const BandwidthContext& ctx, long long m, double delta) {
  const auto v = sigma_m_sq(ctx.cov, m);
  const auto coarse = coarse_sigma_bounds(ctx.cov.e0, ctx.cov.q[0], m);
  const double phi_norm = 1 / std::sqrt(ctx.basis.eigenvalue(0));
  auto bound = [&](double variance) {
    return phi_norm * prediction_bound_unchecked(prediction_inputs_for(ctx, prediction_epsilon(variance, m, delta)));
  };
  return {bound(v.sigma_m_sq), bound(coarse.remark), bound(ctx.cov.e0)};
}

bool prediction_hypothesis_holds(const BandwidthContext& ctx, long long m, double delta) {
  const auto in = prediction_inputs_for(ctx, prediction_epsilon(sigma_m_sq(ctx.cov, m).sigma_m_sq, m, delta));
  return in.epsilon < in.delta_N;
}

CellResult estimation_cell(const ExperimentConfig& cfg, const BandwidthContext& ctx, long long m, int replicates) {
  const auto b = estimation_bounds(ctx, m, cfg.delta);
  CellResult out;
  std::vector<double> errs, sq;
  int clamped = 0;
  for (int r = 0; r < replicates; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto data = sample_sliding_window(ctx.system, static_cast<std::size_t>(m), replicate_seed(cfg, r));
    const auto e = estimation_error_terms(data, ctx.basis, ctx.cov);
    clamped += e.clamped ? 1 : 0;
    sq.push_back(e.value);
    errs.push_back(std::sqrt(e.value));
    out.rows.push_back({"estimation", ctx.sigma, m, r, errs.back(), b.exact, b.coarse, b.iid,
                        cfg.record_timing ? seconds_since(t0) : 0.0});
  }
  const double p90 = percentile(errs, 0.9), p90_sq = percentile(sq, 0.9), mean_sq = mean_of(sq);
  out.rows.push_back({"estimation_p90", ctx.sigma, m, -1, p90, b.exact, b.coarse, b.iid, 0});
  out.rows.push_back({"estimation_p90_sq", ctx.sigma, m, -1, p90_sq, b.exact, b.coarse, b.iid, 0});
  out.rows.push_back({"estimation_mean_sq", ctx.sigma, m, -1, mean_sq, b.exact, b.coarse, b.iid, 0});

  const auto v = sigma_m_sq(ctx.cov, m);
  out.summary = {{"sigma", ctx.sigma},
                 {"m", m},
                 {"replicates", replicates},
                 {"n_mercer", ctx.n_mercer},
                 {"n_koopman", ctx.cov.n_koopman()},
                 {"e0", ctx.cov.e0},
                 {"sigma_m_sq", v.sigma_m_sq},
                 {"sigma_inf_sq", v.sigma_inf_sq},
                 {"coarse_variance", coarse_sigma_bounds(ctx.cov.e0, ctx.cov.q[0], m).remark},
                 {"bound_exact", b.exact},
                 {"bound_coarse", b.coarse},
                 {"bound_iid", b.iid},
                 {"p90", p90},
                 {"p90_sq", p90_sq},
                 {"mean_sq", mean_sq},
                 {"expected_mean_sq", v.sigma_m_sq / double(m)},
                 {"clamped_replicates", clamped}};
  return out;
}

CellResult prediction_cell(const ExperimentConfig& cfg, const BandwidthContext& ctx, long long m, int replicates) {
  const int N = ctx.n_mercer;
  const RbfKernel<double> k(ctx.sigma);
  const auto phi0 = mercer_observable(ctx.basis);
  const auto truth = analytic_truncated_prediction(ctx.basis, ctx.system, phi0, N, cfg.quadrature_order);
  const auto rule = prediction_error_rule(ctx.system, ctx.sigma);
  const std::span<const double> nodes(rule.nodes.data(), static_cast<std::size_t>(rule.nodes.size()));
  Eigen::VectorXd truth_at(rule.nodes.size());
  for (Eigen::Index i = 0; i < truth_at.size(); ++i) truth_at[i] = truth(rule.nodes[i]);

  EmpiricalFeatureOptions fopt;
  fopt.max_feature_points = cfg.max_feature_points;
  const auto b = prediction_bounds(ctx, m, cfg.delta);
  CellResult out;
  std::vector<double> errs;
  std::set<std::string> warnings;
  bool subsampled = false;
  for (int r = 0; r < replicates; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto data = sample_sliding_window(ctx.system, static_cast<std::size_t>(m), replicate_seed(cfg, r));
    const auto features = empirical_features(data, k, N, fopt);
    subsampled = subsampled || features.subsampled();
    for (const auto& w : features.warnings)
      if (w.find("near-tied") != std::string::npos) warnings.insert(w);
    const auto pred = prediction_expansion(features, data, phi0)(nodes);
    double s = 0;
    for (Eigen::Index i = 0; i < truth_at.size(); ++i) {
      const double d = truth_at[i] - pred[static_cast<std::size_t>(i)];
      s += rule.weights[i] * d * d;
    }
    errs.push_back(std::sqrt(s));
    out.rows.push_back({"prediction", ctx.sigma, m, r, errs.back(), b.exact, b.coarse, b.iid,
                        cfg.record_timing ? seconds_since(t0) : 0.0});
  }
  const double mean = mean_of(errs), sd = stddev_of(errs), median = percentile(errs, 0.5);
  out.rows.push_back({"prediction_mean", ctx.sigma, m, -1, mean, b.exact, b.coarse, b.iid, 0});
  out.rows.push_back({"prediction_std", ctx.sigma, m, -1, sd, b.exact, b.coarse, b.iid, 0});
  out.rows.push_back({"prediction_median", ctx.sigma, m, -1, median, b.exact, b.coarse, b.iid, 0});

  const auto in = prediction_inputs_for(ctx, prediction_epsilon(sigma_m_sq(ctx.cov, m).sigma_m_sq, m, cfg.delta));
  out.summary = {{"sigma", ctx.sigma},
                 {"m", m},
                 {"replicates", replicates},
                 {"N", N},
                 {"epsilon", in.epsilon},
                 {"delta_N", in.delta_N},
                 {"hypothesis_epsilon_below_delta_N", in.epsilon < in.delta_N},
                 {"phi_rkhs_norm", 1 / std::sqrt(ctx.basis.eigenvalue(0))},
                 {"bound_exact", b.exact},
                 {"bound_coarse", b.coarse},
                 {"bound_iid", b.iid},
                 {"mean", mean},
                 {"std", sd},
                 {"median", median},
                 {"feature_points", std::min<long long>(m, static_cast<long long>(cfg.max_feature_points))},
                 {"subsampled", subsampled},
                 {"warnings", std::vector<std::string>(warnings.begin(), warnings.end())}};
  return out;
}

ExperimentResult run_estimation_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  return sweep(cfg, "estimation", cfg.replicates_estimation, estimation_cell, log);
}

ExperimentResult run_prediction_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  return sweep(cfg, "prediction", cfg.replicates_prediction, prediction_cell, log);
}

void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  write_csv(result.rows, dir / (name + ".csv"));
  std::ofstream js(dir / (name + "_summary.json"), std::ios::binary);
  if (!js) throw std::runtime_error("cannot write summary in " + dir.string());
  js << result.summary.dump(2) << '\n';
}

}  // namespace koopvar
