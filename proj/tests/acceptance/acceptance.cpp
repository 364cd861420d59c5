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

// Acceptance run: one [PASS]/[FAIL] line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "koopvar/experiments.hpp"

using namespace koopvar;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double time_limit_s;
  std::function<Outcome()> run;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

const std::vector<double> kBandwidths{0.05, 0.1, 0.5};

double median(std::vector<double> v) { return percentile(std::move(v), 0.5); }

std::vector<double> replicate_errors(const CellResult& cell, const std::string& experiment) {
  std::vector<double> out;
  for (const auto& r : cell.rows)
    if (r.experiment == experiment) out.push_back(r.error);
  return out;
}

Outcome mercer_trace() {
  double worst = 0;
  for (double s : kBandwidths) worst = std::max(worst, std::abs(MercerBasis<double>(1.0, s, 256).eigenvalues().sum() - 1));
  return {worst <= 1e-5, "max |sum_{i<256} lambda_i - 1| = " + fmt(worst) + " (tol 1e-5)"};
}

Outcome orthonormality() {
  const auto rule = gauss_hermite<double>(128);
  double mercer = 0;
  for (double s : kBandwidths) {
    const MercerBasis<double> b(1.0, s, 20);
    const auto mu = b.product_rule(rule);
    const MatrixX<double> phi = b.feature_matrix(std::span<const double>(mu.nodes.data(), mu.nodes.size()));
    const Eigen::MatrixXd G = phi * mu.weights.asDiagonal() * phi.transpose();
    mercer = std::max(mercer, (G - Eigen::MatrixXd::Identity(20, 20)).cwiseAbs().maxCoeff());
  }
  const OuSystem<double> sys(1.0, 0.05);
  const KoopmanBasis<double> koop(sys, 21);
  const auto mu = invariant_rule(sys, rule);
  double koopman = 0;
  for (int i = 0; i <= 20; ++i)
    for (int j = 0; j <= 20; ++j) {
      const double g = integrate([&](double x) { return koop(i, x) * koop(j, x); }, mu);
      koopman = std::max(koopman, std::abs(g - (i == j)));
    }
  return {std::max(mercer, koopman) <= 1e-8,
          "Mercer " + fmt(mercer) + ", Koopman " + fmt(koopman) + " (argument " + to_string(koop.argument()) +
              ", tol 1e-8)"};
}

Outcome eigenrelation() {
  const OuSystem<double> sys(1.0, 0.05);
  const KoopmanBasis<double> koop(sys, 16);
  const auto rule = gauss_hermite<double>(128);
  double worst = 0;
  for (int g = 0; g <= 40; ++g) {
    const double x = -2.0 + 0.1 * g;
    for (int j = 0; j <= 15; ++j) {
      const double image =
          integrate_gaussian([&](double y) { return koop(j, y); }, sys.decay() * x, sys.transition_variance(), rule);
      worst = std::max(worst, std::abs(image - koop.eigenvalue(j) * koop(j, x)));
    }
  }
  return {worst <= 1e-8, "max error " + fmt(worst) + " over j <= 15, 41 points (tol 1e-8)"};
}

Outcome variance_formula() {
  const ExperimentConfig cfg = preset_config("quick");
  const auto ctx = make_context(cfg, 0.1);
  std::string detail;
  bool ok = true;
  for (long long m : {100LL, 1000LL}) {
    const auto cell = estimation_cell(cfg, ctx, m, 200);
    const double mean_sq = cell.summary["mean_sq"], expected = cell.summary["expected_mean_sq"];
    const double rel = std::abs(mean_sq / expected - 1);
    ok = ok && rel <= 0.3;
    detail += "m=" + std::to_string(m) + ": mean " + fmt(mean_sq) + " vs sigma_m^2/m " + fmt(expected) + " (rel " +
              fmt(rel) + "); ";
  }
  return {ok, detail + "tol 0.3, N_koopman " + std::to_string(cfg.koopman_truncation)};
}

Outcome f_m_identities() {
  std::mt19937_64 gen(2026);
  std::uniform_real_distribution<double> zdist(-0.99, 0.99);
  std::uniform_int_distribution<long long> mdist(1, 10000);
  double series = 0;
  for (int r = 0; r < 1000; ++r) {
    const double z = zdist(gen);
    const long long m = mdist(gen);
    const double b = f_m_series(z, m);
    series = std::max(series, std::abs(f_m(z, m) - b) / std::max(1.0, std::abs(b)));
  }
  double two = 0;
  for (int r = 0; r < 100; ++r) two = std::max(two, std::abs(f_m(zdist(gen), 2) - 1));
  // near z = 1 against a long double series; exactly m - 1 at z = 1
  double limit = 0, near = 0;
  for (long long m : {2LL, 3LL, 100LL, 10000LL, 1000000LL}) {
    limit = std::max(limit, std::abs(f_m(1.0, m) / double(m - 1) - 1));
    for (double eps : {1e-14, 1e-10, 1e-7}) {
      const long double z = static_cast<long double>(1 - eps);
      long double acc = 0;
      for (long long k = m - 1; k >= 1; --k) acc = acc * z + static_cast<long double>(m - k) / m;
      const double ref = static_cast<double>(2 * acc);
      near = std::max(near, std::abs(f_m(1 - eps, m) / ref - 1));
    }
  }
  return {series <= 1e-12 && two <= 1e-12 && limit <= 1e-12 && near <= 1e-10,
          "series vs closed " + fmt(series) + ", |F_2 - 1| " + fmt(two) + ", |F_m(1) / (m-1) - 1| " + fmt(limit) +
              ", near 1 vs long double " + fmt(near)};
}

Outcome coarse_chain() {
  const ExperimentConfig cfg;
  double worst = -INFINITY;
  int cells = 0;
  auto grid = cfg.m_grid;
  for (long long m : preset_config("quick").m_grid) grid.push_back(m);
  for (long long m : {1LL, 2LL, 10000LL}) grid.push_back(m);
  for (double s : kBandwidths) {
    const auto ctx = make_context(cfg, s);
    for (long long m : grid) {
      const auto v = sigma_m_sq(ctx.cov, m);
      const auto b = coarse_sigma_bounds(ctx.cov.e0, ctx.cov.q[0], m);
      worst = std::max({worst, ctx.cov.e0 - v.sigma_m_sq, v.sigma_m_sq - b.simple, b.simple - b.squared,
                        v.sigma_m_sq - b.remark});
      ++cells;
    }
  }
  return {worst <= 1e-12, std::to_string(cells) + " cells, largest violation " + fmt(worst)};
}

Outcome kernel_section() {
  const OuSystem<double> sys(1.0, 0.05);
  double worst = 0;
  for (double s : kBandwidths)
    for (double z : {-1.0, -0.2, 0.0, 0.6, 1.5}) {
      const auto img = propagate_kernel_section(sys, s, z);
      for (int g = 0; g <= 40; ++g) {
        const double x = -2.0 + 0.1 * g;
        const auto tr = trapezoid_measure_rule(sys.decay() * x, sys.transition_variance(), 12.0, 4001);
        const double direct = integrate([&](double y) { return std::exp(-(y - z) * (y - z) / (s * s)); }, tr);
        worst = std::max(worst, std::abs(direct - img(x)));
      }
    }
  return {worst <= 1e-8, "max grid error " + fmt(worst) + " (tol 1e-8)"};
}

Outcome whitening() {
  const OuSystem<double> sys(1.0, 0.05);
  double worst = 0;
  for (double s : kBandwidths)
    for (std::size_t m : {10u, 100u, 1000u})
      for (std::uint64_t seed : {1u, 2u, 3u}) {
        const int N = std::min(s == 0.05 ? 20 : 10, static_cast<int>(m / 2));
        const auto f = empirical_features(sample_iid_pairs(sys, m, seed * 1000 + m), RbfKernel<double>(s), N);
        worst = std::max(worst, (whitening_values(f).array() - 1).abs().maxCoeff());
      }
  return {worst <= 1e-8, "max |<C_hat e_j, e_j> - 1| = " + fmt(worst) + " (tol 1e-8)"};
}

Outcome pseudo_inverse() {
  const OuSystem<double> sys(1.0, 0.05);
  const RbfKernel<double> k(0.01);
  const auto obs = [](double y) { return std::exp(-y * y) + 0.3 * y; };
  double rel = 0, abs_dev = 0;
  for (std::size_t m : {5u, 10u, 20u, 50u})
    for (std::uint64_t seed : {90u, 91u, 92u}) {
      const auto data = sample_iid_pairs(sys, m, seed);
      const auto f = empirical_features(data, k, static_cast<int>(m));
      const Eigen::VectorXd ref = pseudo_inverse_prediction_weights(data, k, obs);
      const double d = (prediction_expansion(f, data, obs).weights - ref).cwiseAbs().maxCoeff();
      abs_dev = std::max(abs_dev, d);
      rel = std::max(rel, d / ref.cwiseAbs().maxCoeff());
    }
  return {rel <= 1e-8, "max coefficient deviation relative " + fmt(rel) + " (absolute " + fmt(abs_dev) +
                           "), sigma 0.01, tol 1e-8"};
}

ExperimentResult& quick_estimation() {
  static ExperimentResult res = run_estimation_experiment(preset_config("quick"));
  return res;
}

Outcome figure2_dominance() {
  const auto& res = quick_estimation();
  bool ok = true;
  double lo = INFINITY, hi = 0;
  int cells = 0;
  for (const auto& r : res.rows) {
    if (r.experiment != "estimation_p90" || r.sigma != 0.1) continue;
    ++cells;
    const double ratio = r.bound_exact / r.error;
    ok = ok && ratio >= 1;
    if (r.m >= 1000) {
      ok = ok && ratio <= 10;
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
  }
  return {ok && cells > 0, std::to_string(cells) + " cells; bound/percentile for m >= 1000 in [" + fmt(lo) + ", " +
                               fmt(hi) + "]"};
}

Outcome iid_failure() {
  ExperimentConfig cfg = preset_config("quick");
  const auto ctx = make_context(cfg, 0.5);
  std::string detail;
  bool any = false;
  for (long long m : {10000LL, 20000LL}) {
    const auto cell = estimation_cell(cfg, ctx, m, cfg.replicates_estimation);
    const double p90 = cell.summary["p90"], iid = cell.summary["bound_iid"];
    any = any || p90 > iid;
    detail += "m=" + std::to_string(m) + ": percentile " + fmt(p90) + " vs i.i.d. bound " + fmt(iid) + "; ";
  }
  return {any, detail + std::to_string(cfg.replicates_estimation) + " replicates"};
}

Outcome figure3_dominance() {
  const auto res = run_prediction_experiment(preset_config("quick"));
  bool ok = true;
  double margin = INFINITY;
  int measured = 0;
  for (const auto& r : res.rows) {
    if (r.experiment != "prediction") continue;
    ++measured;
    const double ratio = r.bound_exact / r.error;
    margin = std::min(margin, ratio);
    ok = ok && ratio >= 10;
  }
  return {ok && measured > 0, std::to_string(measured) + " replicate errors, smallest bound/error " + fmt(margin) +
                                  ", rejected cells " + std::to_string(res.summary["errors"].size())};
}

Outcome consistency() {
  ExperimentConfig cfg = preset_config("quick");
  const auto ctx = make_context(cfg, 0.1);
  std::vector<double> est, pred;
  for (long long m : {100LL, 1000LL, 10000LL}) {
    est.push_back(median(replicate_errors(estimation_cell(cfg, ctx, m, cfg.replicates_estimation), "estimation")));
    pred.push_back(median(replicate_errors(prediction_cell(cfg, ctx, m, cfg.replicates_prediction), "prediction")));
  }
  const bool ok = est[0] > est[1] && est[1] > est[2] && pred[0] > pred[1] && pred[1] > pred[2];
  return {ok, "sigma 0.1, medians estimation " + fmt(est[0]) + " > " + fmt(est[1]) + " > " + fmt(est[2]) +
                  ", prediction " + fmt(pred[0]) + " > " + fmt(pred[1]) + " > " + fmt(pred[2])};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "Mercer trace", 1, mercer_trace},
      {2, "orthonormality", 5, orthonormality},
      {3, "Koopman eigenrelation", 10, eigenrelation},
      {4, "variance formula", 600, variance_formula},
      {5, "F_m identities", 60, f_m_identities},
      {6, "coarse-bound chain", 1, coarse_chain},
      {7, "kernel-section propagation", 60, kernel_section},
      {8, "whitening", 60, whitening},
      {9, "pseudo-inverse identity", 60, pseudo_inverse},
      {10, "estimation bound dominance", 1800, figure2_dominance},
      {11, "i.i.d.-variance failure", 1800, iid_failure},
      {12, "prediction bound dominance", 1200, figure3_dominance},
      {13, "consistency", 1800, consistency},
  };
  int failed = 0;
  // optional criterion ids on the command line; all of them by default
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.time_limit_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("[%s] %d %s: %s; %.2f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                o.detail.c_str(), secs, c.time_limit_s, in_time ? "" : " exceeded");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
