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
#include <cmath>
#include <random>

namespace koopvar {

using nlohmann::json;

namespace {

std::string tag(double sigma) { return "/sigma=" + format_double(sigma); }

ValidationCheck bounded(std::string name, double value, double tol, json detail = json::object()) {
  return {std::move(name), value <= tol ? "pass" : "fail", value, tol, std::move(detail)};
}

ValidationCheck info(std::string name, double value, json detail) {
  return {std::move(name), "info", value, 0, std::move(detail)};
}

double orthonormality(const MatrixX<double>& values, const MeasureRule<double>& rule) {
  const Eigen::MatrixXd G = values * rule.weights.asDiagonal() * values.transpose();
  return (G - Eigen::MatrixXd::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff();
}

std::vector<double> sorted(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v;
}

void mercer_checks(const ExperimentConfig& cfg, std::vector<ValidationCheck>& out) {
  const auto rule = gauss_hermite<double>(cfg.quadrature_order);
  for (double sigma : sorted(cfg.bandwidths)) {
    const MercerBasis<double> wide(cfg.alpha, sigma, cfg.validation_truncation, cfg.quadrature_order);
    out.push_back(bounded("mercer_trace" + tag(sigma), std::abs(wide.eigenvalues().sum() - 1), 1e-5,
                          {{"terms", cfg.validation_truncation}}));

    const int n = std::min(20, cfg.validation_truncation);
    const MercerBasis<double> basis(cfg.alpha, sigma, n, cfg.quadrature_order);
    const auto mu = basis.product_rule(rule);
    const MatrixX<double> phi = basis.feature_matrix(std::span<const double>(mu.nodes.data(), mu.nodes.size()));
    out.push_back(bounded("mercer_orthonormality" + tag(sigma), orthonormality(phi, mu), 1e-8,
                          {{"features", n}, {"quadrature_order", cfg.quadrature_order}}));
    out.push_back(bounded("mercer_normalisation" + tag(sigma), basis.norm_deviation(), 1e-10,
                          {{"max_renormalisation_minus_one", (basis.renormalization().array() - 1).abs().maxCoeff()}}));

    // k(x, y) against the truncated series on a grid
    const RbfKernel<double> k(sigma);
    const int nt = cfg.validation_truncation;
    const Eigen::VectorXd lam = wide.eigenvalues();
    std::vector<double> grid;
    for (int g = 0; g <= 16; ++g) grid.push_back(-2.0 + 0.25 * g);
    const MatrixX<double> F = wide.feature_matrix(grid, nt);
    const Eigen::MatrixXd K = F.transpose() * lam.asDiagonal() * F;
    // |k - S_n| <= sqrt(r(x) r(y)) with r(x) = 1 - S_n(x, x) >= 0 (Cauchy-Schwarz on the tail)
    double worst = 0, allowed = 0;
    bool ok = true;
    for (std::size_t i = 0; i < grid.size(); ++i)
      for (std::size_t j = 0; j < grid.size(); ++j) {
        const auto a = Eigen::Index(i), b = Eigen::Index(j);
        const double err = std::abs(K(a, b) - k(grid[i], grid[j]));
        const double tail = std::sqrt(std::max(0.0, 1 - K(a, a)) * std::max(0.0, 1 - K(b, b)));
        const double tol = std::max(1e-6, tail + 1e-12);
        ok = ok && err <= tol;
        worst = std::max(worst, err);
        allowed = std::max(allowed, tol);
      }
    out.push_back({"mercer_reconstruction" + tag(sigma), ok ? "pass" : "fail", worst, allowed,
                   {{"terms", nt}, {"pointwise_tolerance", "max(1e-6, sqrt(r(x) r(y)))"}}});
  }
}

void koopman_checks(const ExperimentConfig& cfg, std::vector<ValidationCheck>& out) {
  const auto sys = cfg.system();
  const auto rule = gauss_hermite<double>(cfg.quadrature_order);
  const KoopmanBasis<double> koop(sys, 20, cfg.quadrature_order);
  const auto mu = invariant_rule(sys, rule);
  Eigen::MatrixXd psi(20, mu.nodes.size());
  for (Eigen::Index i = 0; i < mu.nodes.size(); ++i)
    for (int j = 0; j < 20; ++j) psi(j, i) = koop(j, mu.nodes[i]);

  json candidates = json::array();
  for (const auto& c : koop.candidates())
    candidates.push_back({{"argument", to_string(c.argument)},
                          {"orthonormality_error", c.orthonormality_error},
                          {"eigenrelation_error", c.eigenrelation_error},
                          {"accepted", c.accepted}});
  std::vector<double> factors;
  for (int j = 0; j < 15; ++j) factors.push_back(std::exp(koop.log_correction()[j]));
  out.push_back(bounded("koopman_orthonormality", orthonormality(psi, mu), 1e-8,
                        {{"argument", to_string(koop.argument())},
                         {"candidates", candidates},
                         {"normalisation_correction_factors", factors}}));

  double eig = 0;
  for (int g = 0; g <= 40; ++g) {
    const double x = -2.0 + 0.1 * g;
    for (int j = 0; j < 15; ++j) {
      const double image = integrate_gaussian([&](double y) { return koop(j, y); }, sys.decay() * x,
                                              sys.transition_variance(), rule);
      eig = std::max(eig, std::abs(image - koop.eigenvalue(j) * koop(j, x)));
    }
  }
  out.push_back(bounded("koopman_eigenrelation", eig, 1e-8, {{"modes", 15}, {"grid_points", 41}}));

  const auto obs = GaussianObservable<double>::normalized(0.3, 0.2);
  const auto variants = resolve_gaussian_variant(sys, obs, rule);
  json detail = json::array();
  std::string chosen;
  double chosen_err = INFINITY;
  for (const auto& v : variants) {
    detail.push_back({{"variant", to_string(v.variant)}, {"max_error", v.max_error}, {"accepted", v.accepted}});
    if (v.accepted && chosen.empty()) {
      chosen = to_string(v.variant);
      chosen_err = v.max_error;
    }
  }
  out.push_back({"gaussian_propagation_variant", chosen.empty() ? "fail" : "pass", chosen_err, 1e-8,
                 {{"resolved", chosen}, {"candidates", detail}}});

  for (double sigma : sorted(cfg.bandwidths)) {
    double worst = 0;
    for (double z : {-0.8, 0.0, 1.3}) {
      const auto img = propagate_kernel_section(sys, sigma, z);
      for (int g = 0; g <= 40; ++g) {
        const double x = -2.0 + 0.1 * g;
        const auto tr = trapezoid_measure_rule(sys.decay() * x, sys.transition_variance(), 12.0, 4001);
        const double direct =
            integrate([&](double y) { return std::exp(-(y - z) * (y - z) / (sigma * sigma)); }, tr);
        worst = std::max(worst, std::abs(direct - img(x)));
      }
    }
    out.push_back(bounded("kernel_section_propagation" + tag(sigma), worst, 1e-8));
  }
}

void variance_checks(const ExperimentConfig& cfg, std::vector<ValidationCheck>& out) {
  std::mt19937_64 gen(cfg.base_seed);
  std::uniform_real_distribution<double> zdist(-0.99, 0.99);
  std::uniform_int_distribution<long long> mdist(1, 10000);
  double worst = 0;
  for (int r = 0; r < 1000; ++r) {
    const double z = zdist(gen);
    const long long m = mdist(gen);
    const double b = f_m_series(z, m);
    worst = std::max(worst, std::abs(f_m(z, m) - b) / std::max(1.0, std::abs(b)));
  }
  double f2 = 0;
  for (double z : {-0.9, 0.0, 0.5, 0.999999}) f2 = std::max(f2, std::abs(f_m(z, 2) - 1));
  double limit = 0;
  for (long long m : {3LL, 100LL, 10000LL, 1000000LL}) {
    limit = std::max(limit, std::abs(f_m(1.0, m) - double(m - 1)) / double(m - 1));
    limit = std::max(limit, std::abs(f_m(1 - 1e-9, m) - f_m_series(1 - 1e-9, m)) / double(m - 1));
  }
  out.push_back(bounded("f_m_series_vs_closed_form", worst, 1e-12, {{"samples", 1000}}));
  out.push_back(bounded("f_m_two_is_one", f2, 1e-12));
  out.push_back(bounded("f_m_limit_at_one", limit, 1e-12));

  double chain = 0;
  int cells = 0;
  for (double sigma : sorted(cfg.bandwidths)) {
    const auto ctx = make_context(cfg, sigma);
    for (long long m : cfg.m_grid) {
      const auto v = sigma_m_sq(ctx.cov, m);
      const auto b = coarse_sigma_bounds(ctx.cov.e0, ctx.cov.q[0], m);
      chain = std::max({chain, ctx.cov.e0 - v.sigma_m_sq, v.sigma_m_sq - b.simple, b.simple - b.squared,
                        v.sigma_m_sq - b.remark});
      ++cells;
    }

    // quadrature-order sensitivity of the analytic quantities
    CovarianceOptions lo, hi;
    lo.n_koopman = hi.n_koopman = cfg.koopman_truncation;
    lo.quadrature_order = 64;
    hi.quadrature_order = 128;
    const MercerBasis<double> b64(cfg.alpha, sigma, ctx.n_mercer, 64), b128(cfg.alpha, sigma, ctx.n_mercer, 128);
    const auto c64 = analytic_covariance(b64, ctx.system, lo), c128 = analytic_covariance(b128, ctx.system, hi);
    const double rel = std::max({std::abs(c64.hs_norm_sq - c128.hs_norm_sq) / c128.hs_norm_sq,
                                 std::abs(c64.e0 - c128.e0) / c128.e0,
                                 (c64.d - c128.d).cwiseAbs().maxCoeff() / c128.d.cwiseAbs().maxCoeff(),
                                 std::abs(sigma_m_sq(c64, 1000).sigma_m_sq - sigma_m_sq(c128, 1000).sigma_m_sq) /
                                     sigma_m_sq(c128, 1000).sigma_m_sq});
    out.push_back(bounded("quadrature_order_64_vs_128" + tag(sigma), rel, 1e-10,
                          {{"quantities", "hs_norm_sq, e0, d, sigma_m_sq(1000)"}}));

    // truncation sensitivity of the variance series (reported only)
    CovarianceOptions wide_j = hi;
    wide_j.n_koopman = 4 * cfg.koopman_truncation;
    const auto cj = analytic_covariance(b128, ctx.system, wide_j);
    const MercerBasis<double> b2n(cfg.alpha, sigma, 2 * ctx.n_mercer, 128);
    const auto cn = analytic_covariance(b2n, ctx.system, hi);
    json detail;
    for (long long m : {100LL, 1000LL, 10000LL})
      detail["m=" + std::to_string(m)] = {
          {"sigma_m_sq", sigma_m_sq(ctx.cov, m).sigma_m_sq},
          {"n_koopman_x4", sigma_m_sq(cj, m).sigma_m_sq},
          {"n_mercer_x2", sigma_m_sq(cn, m).sigma_m_sq}};
    out.push_back(info("variance_truncation_sensitivity" + tag(sigma),
                       std::abs(sigma_m_sq(cj, 1000).sigma_m_sq / sigma_m_sq(ctx.cov, 1000).sigma_m_sq - 1), detail));

    // Koopman-mode expansion of the pair integrals (reported only)
    json parseval;
    for (int J : {15, 64, 120}) {
      const KoopmanBasis<double> koop(ctx.system, J, 256);
      const auto rule = gauss_hermite<double>(256);
      const Eigen::MatrixXd A = overlap_matrix(ctx.basis, koop, rule);
      Eigen::VectorXd q(J);
      for (int j = 0; j < J; ++j) q[j] = koop.eigenvalue(j);
      parseval["J=" + std::to_string(J)] = (pair_integral_matrix(A, q) - ctx.cov.M).cwiseAbs().maxCoeff();
    }
    out.push_back(info("spectral_pair_integral_deviation" + tag(sigma), parseval["J=15"].get<double>(), parseval));
  }
  out.push_back(bounded("coarse_bound_chain", chain, 1e-12, {{"cells", cells}}));
}

void predictor_checks(const ExperimentConfig& cfg, std::vector<ValidationCheck>& out) {
  const auto sys = cfg.system();
  double worst = 0, norm = 0;
  for (double sigma : sorted(cfg.bandwidths)) {
    const RbfKernel<double> k(sigma);
    for (std::size_t m : {10u, 100u, 1000u}) {
      const int N = std::min<int>(cfg.mercer_truncation(sigma), static_cast<int>(m / 2));
      const auto data = sample_iid_pairs(sys, m, cfg.base_seed + m);
      const auto f = empirical_features(data, k, N);
      worst = std::max(worst, (whitening_values(f).array() - 1).abs().maxCoeff());
      norm = std::max(norm, (feature_rkhs_norms_sq(f).array() * f.eigensystem.values.head(N).array() - 1).abs().maxCoeff());
    }
  }
  out.push_back(bounded("whitening", worst, 1e-8, {{"m", {10, 100, 1000}}}));
  out.push_back(bounded("feature_rkhs_normalisation", norm, 1e-8));

  // N = m predictor against a pseudo-inverse assembly (well-conditioned narrow kernel)
  const RbfKernel<double> k(0.01);
  const auto obs = [](double y) { return std::exp(-y * y) + 0.3 * y; };
  double dev = 0;
  for (std::size_t m : {5u, 20u, 50u}) {
    const auto data = sample_iid_pairs(sys, m, cfg.base_seed + 40 + m);
    const auto f = empirical_features(data, k, static_cast<int>(m));
    const Eigen::VectorXd ref = pseudo_inverse_prediction_weights(data, k, obs);
    dev = std::max(dev, (prediction_expansion(f, data, obs).weights - ref).cwiseAbs().maxCoeff() /
                            ref.cwiseAbs().maxCoeff());
  }
  out.push_back(bounded("pseudo_inverse_identity", dev, 1e-8, {{"bandwidth", 0.01}, {"m", {5, 20, 50}}}));
}

}  // namespace

std::vector<ValidationCheck> run_validation_suite(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<ValidationCheck> out;
  auto guarded = [&](const char* group, auto&& fn) {
    try {
      fn(cfg, out);
    } catch (const std::exception& e) {
      out.push_back({std::string(group) + "_error", "fail", NAN, 0, {{"message", e.what()}}});
    }
  };
  guarded("mercer", mercer_checks);
  guarded("koopman", koopman_checks);
  guarded("variance", variance_checks);
  guarded("predictor", predictor_checks);
  return out;
}

json validation_report(const std::vector<ValidationCheck>& checks, const ExperimentConfig& cfg) {
  json config;
  to_json(config, cfg);
  json list = json::array();
  int passed = 0, failed = 0, infos = 0;
  for (const auto& c : checks) {
    passed += c.status == "pass";
    failed += c.status == "fail";
    infos += c.status == "info";
    list.push_back({{"name", c.name},
                    {"status", c.status},
                    {"value", c.value},
                    {"tolerance", c.tolerance},
                    {"detail", c.detail}});
  }
  return {{"config", config},
          {"passed", passed},
          {"failed", failed},
          {"info", infos},
          {"all_passed", failed == 0},
          {"checks", list}};
}

}  // namespace koopvar
