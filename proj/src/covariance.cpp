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

#include "koopvar/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>
#include <stdexcept>

namespace koopvar {

namespace {

std::span<const double> as_span(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

int working_order(int requested, int needed) { return std::min(kMaxQuadratureOrder, std::max(requested, needed)); }

}  // namespace

PairedDataset sample_iid_pairs(const OuSystem<double>& sys, std::size_t m, std::uint64_t seed) {
  if (m == 0) throw std::invalid_argument("sample_iid_pairs: m must be positive");
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> stationary(0.0, std::sqrt(sys.invariant_variance()));
  PairedDataset out;
  out.mode = SamplingMode::iid;
  out.seed = seed;
  out.lag = sys.lag();
  out.xs.resize(m);
  out.ys.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    out.xs[k] = stationary(gen);
    out.ys[k] = sample_transition(sys, out.xs[k], gen);
  }
  return out;
}

PairedDataset sliding_window(const Trajectory<double>& traj, double lag) {
  if (traj.states.size() < 2) throw std::invalid_argument("sliding_window: trajectory needs at least two states");
  PairedDataset out;
  out.mode = SamplingMode::sliding_window;
  out.seed = traj.seed;
  out.lag = lag;
  out.xs.assign(traj.states.begin(), traj.states.end() - 1);
  out.ys.assign(traj.states.begin() + 1, traj.states.end());
  return out;
}

PairedDataset sample_sliding_window(const OuSystem<double>& sys, std::size_t m, std::uint64_t seed) {
  if (m == 0) throw std::invalid_argument("sample_sliding_window: m must be positive");
  return sliding_window(simulate_trajectory(sys, m + 1, seed), sys.lag());
}

Eigen::MatrixXd overlap_matrix(const MercerBasis<double>& basis, const KoopmanBasis<double>& koopman,
                               const QuadratureRule<double>& rule) {
  const auto mu = basis.product_rule(rule, 1.0);
  const Eigen::MatrixXd phi = basis.feature_matrix(as_span(mu.nodes));
  const Eigen::MatrixXd psi = koopman.matrix(as_span(mu.nodes));
  return phi * mu.weights.asDiagonal() * psi.transpose();
}

Eigen::MatrixXd pair_integral_matrix(const Eigen::MatrixXd& A, const Eigen::VectorXd& q) {
  if (A.cols() != q.size()) throw std::invalid_argument("pair_integral_matrix: A has " + std::to_string(A.cols()) +
                                                        " columns but " + std::to_string(q.size()) + " eigenvalues");
  const Eigen::MatrixXd M = A * q.asDiagonal() * A.transpose();
  return (M + M.transpose()) / 2;
}

Eigen::MatrixXd pair_integral_matrix_direct(const MercerBasis<double>& basis, const OuSystem<double>& sys,
                                            const QuadratureRule<double>& rule) {
  const auto mu = basis.product_rule(rule, propagated_product_envelope(basis, sys) / basis.zeta_sq());
  const Eigen::MatrixXd phi = basis.feature_matrix(as_span(mu.nodes));
  const Eigen::MatrixXd kphi = propagated_feature_matrix(basis, sys, as_span(mu.nodes), rule);
  Eigen::MatrixXd M = phi * mu.weights.asDiagonal() * kphi.transpose();
  // Reversibility makes M symmetric; remove the round-off asymmetry.
  return (M + M.transpose()) / 2;
}

double hs_norm_sq_analytic(const Eigen::VectorXd& lambda, const Eigen::MatrixXd& M) {
  if (lambda.size() != M.rows() || M.rows() != M.cols())
    throw std::invalid_argument("hs_norm_sq_analytic: dimension mismatch");
  return (lambda.asDiagonal() * M.cwiseAbs2() * lambda.asDiagonal()).sum();
}

double hs_norm_sq_analytic(const MercerBasis<double>& basis, const Eigen::MatrixXd& M) {
  return hs_norm_sq_analytic(Eigen::VectorXd(basis.eigenvalues().head(M.rows())), M);
}

double truncated_diagonal_moment(const MercerBasis<double>& basis, const OuSystem<double>& sys,
                                 const QuadratureRule<double>& rule) {
  // phi_N carries exp(-2 zeta^2 x^2); merge it into the transition density as in propagate_features.
  const int n = basis.size();
  const Eigen::VectorXd lambda = basis.eigenvalues();
  const double c = 2 * basis.zeta_sq();
  const double a = sys.decay();
  const double s2 = sys.transition_variance();
  const double denom = 1 + 2 * c * s2;
  const auto inner_rule = gauss_hermite<double>(working_order(rule.order(), n + 4));
  const auto diag_poly = [&](double y, std::vector<double>& buf) {
    // phi_N(y) exp(2 zeta^2 y^2)
    hermite_orthonormal_weighted_all<double>(basis.hermite_scale(), 0.0, y, buf);
    double acc = 0;
    for (int k = 0; k < n; ++k) {
      const double v = buf[k] * basis.renormalization()[k];
      acc += lambda[k] * v * v;
    }
    return acc * basis.eta();
  };
  const auto propagated = [&](double x, std::vector<double>& buf) {
    const double mean = a * x;
    const double scale = std::exp(-c * mean * mean / denom) / std::sqrt(denom);
    return scale * integrate_gaussian([&](double y) { return diag_poly(y, buf); }, mean / denom, s2 / denom, inner_rule);
  };
  const double envelope = c + c * a * a / denom;
  const auto outer_rule = gauss_hermite<double>(working_order(rule.order(), 2 * n + 4));
  const auto mu = envelope_rule(outer_rule, sys.invariant_variance(), envelope);
  std::vector<double> buf(n);
  double acc = 0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double x = mu.nodes[i];
    acc += mu.weights[i] * diag_poly(x, buf) * std::exp(-c * x * x) * propagated(x, buf);
  }
  return acc;
}

double e0(double hs_norm_sq, double diagonal) {
  constexpr double slack = 1e-12;
  if (!(hs_norm_sq >= -slack && hs_norm_sq <= 1 + slack))
    throw std::domain_error("e0: HS norm " + std::to_string(hs_norm_sq) + " outside [0, 1]; truncation failure upstream");
  if (hs_norm_sq > diagonal + slack)
    throw std::domain_error("e0: HS norm exceeds the diagonal moment; truncation failure upstream");
  return std::max(0.0, diagonal - hs_norm_sq);
}

Eigen::VectorXd d_coefficients(const MercerBasis<double>& basis, const OuSystem<double>& sys,
                               const KoopmanBasis<double>& koopman, const QuadratureRule<double>& rule,
                               PairIntegralRoute route, const Eigen::MatrixXd* A) {
  const int n = basis.size();
  const int J = koopman.size();
  const Eigen::VectorXd lambda = basis.eigenvalues();
  Eigen::VectorXd d = Eigen::VectorXd::Zero(std::max(J - 1, 0));
  if (J < 2) return d;

  MeasureRule<double> mu;
  Eigen::MatrixXd kphi;
  if (route == PairIntegralRoute::transition_quadrature) {
    const auto r = gauss_hermite<double>(working_order(rule.order(), n + J / 2 + 8));
    mu = basis.product_rule(r, propagated_product_envelope(basis, sys) / basis.zeta_sq());
    kphi = propagated_feature_matrix(basis, sys, as_span(mu.nodes), r);
  } else {
    const auto r = gauss_hermite<double>(working_order(rule.order(), n / 2 + J + 8));
    Eigen::MatrixXd overlaps = A ? *A : overlap_matrix(basis, koopman, r);
    if (overlaps.rows() != n || overlaps.cols() != J) throw std::invalid_argument("d_coefficients: A has wrong shape");
    mu = basis.product_rule(r, 1.0);
    Eigen::VectorXd q(J);
    for (int j = 0; j < J; ++j) q[j] = koopman.eigenvalue(j);
    kphi = overlaps * q.asDiagonal() * koopman.matrix(as_span(mu.nodes));
  }
  const Eigen::MatrixXd phi = basis.feature_matrix(as_span(mu.nodes));
  const Eigen::MatrixXd psi = koopman.matrix(as_span(mu.nodes));
  const Eigen::MatrixXd lphi = lambda.asDiagonal() * phi;
  for (int l = 1; l < J; ++l) {
    const Eigen::VectorXd w = mu.weights.cwiseProduct(psi.row(l).transpose());
    const Eigen::MatrixXd B = lphi * w.asDiagonal() * kphi.transpose() * lambda.asDiagonal();  // lambda_k I_kml lambda_m
    const Eigen::MatrixXd I = phi * w.asDiagonal() * kphi.transpose();
    d[l - 1] = B.cwiseProduct(I.transpose()).sum();
  }
  return d;
}

AnalyticCovariance analytic_covariance(const MercerBasis<double>& basis, const OuSystem<double>& sys,
                                       const CovarianceOptions& options) {
  if (options.n_koopman < 1) throw std::invalid_argument("analytic_covariance: n_koopman must be positive");
  if (std::abs(basis.alpha() - sys.alpha()) > 1e-14 * sys.alpha())
    throw std::invalid_argument("analytic_covariance: basis and system use different alpha");
  AnalyticCovariance cov;
  cov.system = sys;
  cov.options = options;
  cov.n_mercer = basis.size();
  cov.lambda = basis.eigenvalues();
  const int J = options.n_koopman;
  const KoopmanBasis<double> koopman(sys, J, options.quadrature_order);
  const auto rule = gauss_hermite<double>(working_order(options.quadrature_order, cov.n_mercer + J / 2 + 8));
  Eigen::VectorXd q_all(J);
  for (int j = 0; j < J; ++j) q_all[j] = koopman.eigenvalue(j);
  cov.q = q_all.tail(J - 1);
  cov.A = overlap_matrix(basis, koopman, rule);
  cov.M = options.route == PairIntegralRoute::transition_quadrature ? pair_integral_matrix_direct(basis, sys, rule)
                                                                   : pair_integral_matrix(cov.A, q_all);
  cov.hs_norm_sq = hs_norm_sq_analytic(cov.lambda, cov.M);
  cov.diagonal_moment = truncated_diagonal_moment(basis, sys, rule);
  cov.e0 = e0(cov.hs_norm_sq, cov.diagonal_moment);
  cov.e0_unit_diagonal = e0(cov.hs_norm_sq);
  cov.d = d_coefficients(basis, sys, koopman, rule, options.route, &cov.A);
  return cov;
}

double f_m_series(double z, long long m) {
  if (m < 1) throw std::invalid_argument("f_m: m must be positive");
  double acc = 0;
  for (long long k = m - 1; k >= 1; --k) acc = acc * z + static_cast<double>(m - k);
  return 2 * acc / static_cast<double>(m);
}

double f_m(double z, long long m) {
  if (m < 1) throw std::invalid_argument("f_m: m must be positive");
  if (m == 1) return 0;
  const double eps = 1 - z;
  const double mm = static_cast<double>(m);
  if (mm * std::abs(eps) < 1) {
    // Near z = 1 the closed form cancels. Expanding z^{k-1} = (1 - eps)^{k-1} binomially gives
    // F_m = sum_n (-eps)^n (2/m) C(m, n + 2), whose terms shrink by at least m |eps| each step.
    double term = mm - 1;
    double acc = term;
    for (long long n = 0; n + 2 < m; ++n) {
      term *= -eps * static_cast<double>(m - n - 2) / static_cast<double>(n + 3);
      acc += term;
      if (std::abs(term) <= 1e-17 * std::abs(acc)) break;
    }
    return acc;
  }
  const double zm = std::pow(z, static_cast<double>(m));
  return 2 / eps * (1 - (1 - zm) / (mm * eps));
}

VarianceBreakdown sigma_m_sq(double e0_value, const Eigen::VectorXd& d, const Eigen::VectorXd& q, long long m) {
  if (m < 1) throw std::invalid_argument("sigma_m_sq: m must be positive");
  if (d.size() != q.size()) throw std::invalid_argument("sigma_m_sq: d and q differ in length");
  VarianceBreakdown out;
  out.e0 = e0_value;
  out.m = m;
  double limit = 0;
  for (Eigen::Index l = 0; l < d.size(); ++l) {
    out.correction += d[l] * f_m(q[l], m);
    limit += 2 * d[l] / (1 - q[l]);
  }
  out.sigma_m_sq = e0_value + out.correction;
  out.sigma_inf_sq = e0_value + limit;
  out.iid_variance = e0_value / static_cast<double>(m);
  return out;
}

VarianceBreakdown sigma_m_sq(const AnalyticCovariance& cov, long long m) { return sigma_m_sq(cov.e0, cov.d, cov.q, m); }

Eigen::MatrixXd empirical_pair_moments(const PairedDataset& data, const MercerBasis<double>& basis, int n) {
  if (data.size() == 0) throw std::invalid_argument("empirical_pair_moments: empty dataset");
  if (data.xs.size() != data.ys.size()) throw std::invalid_argument("empirical_pair_moments: xs and ys differ in length");
  if (n < 0) n = basis.size();
  const Eigen::MatrixXd fx = basis.feature_matrix(data.xs, n);
  const Eigen::MatrixXd fy = basis.feature_matrix(data.ys, n);
  return fx * fy.transpose() / static_cast<double>(data.size());
}

double empirical_hs_norm_sq(const PairedDataset& data, const RbfKernel<double>& k) {
  const std::size_t m = data.size();
  if (m == 0) throw std::invalid_argument("empirical_hs_norm_sq: empty dataset");
  const double inv_s2 = 1 / (k.bandwidth * k.bandwidth);
  double off = 0;
  for (std::size_t a = 0; a < m; ++a) {
    double row = 0;
    for (std::size_t b = a + 1; b < m; ++b) {
      const double dx = data.xs[a] - data.xs[b];
      const double dy = data.ys[a] - data.ys[b];
      row += std::exp(-(dx * dx + dy * dy) * inv_s2);
    }
    off += row;
  }
  const double md = static_cast<double>(m);
  return (md + 2 * off) / (md * md);
}

double empirical_hs_norm_sq_series(const PairedDataset& data, const MercerBasis<double>& basis, int n) {
  const Eigen::MatrixXd G = empirical_pair_moments(data, basis, n);
  return hs_norm_sq_analytic(Eigen::VectorXd(basis.eigenvalues().head(G.rows())), G);
}

double empirical_cross_inner(const PairedDataset& data, const MercerBasis<double>& basis, const Eigen::MatrixXd& M) {
  const Eigen::MatrixXd G = empirical_pair_moments(data, basis, static_cast<int>(M.rows()));
  const Eigen::VectorXd lambda = basis.eigenvalues().head(M.rows());
  return (lambda.asDiagonal() * M.cwiseProduct(G) * lambda.asDiagonal()).sum();
}

EstimationError estimation_error_terms(const PairedDataset& data, const MercerBasis<double>& basis,
                                       const AnalyticCovariance& cov,
                                       const std::optional<RbfKernel<double>>& exact_gram) {
  if (basis.size() < cov.n_mercer) throw std::invalid_argument("estimation_error: basis smaller than the covariance");
  if (exact_gram && std::abs(exact_gram->bandwidth - basis.bandwidth()) > 1e-14 * basis.bandwidth())
    throw std::invalid_argument("estimation_error: kernel and basis bandwidths differ");
  const Eigen::MatrixXd G = empirical_pair_moments(data, basis, cov.n_mercer);
  EstimationError out;
  out.hs_norm_sq = cov.hs_norm_sq;
  out.empirical_norm_sq = exact_gram ? empirical_hs_norm_sq(data, *exact_gram) : hs_norm_sq_analytic(cov.lambda, G);
  out.cross_inner = (cov.lambda.asDiagonal() * cov.M.cwiseProduct(G) * cov.lambda.asDiagonal()).sum();
  const double raw = out.hs_norm_sq + out.empirical_norm_sq - 2 * out.cross_inner;
  if (raw < -kNegativeErrorTolerance)
    throw std::runtime_error("estimation_error: squared HS error " + std::to_string(raw) +
                             " is negative; kernel and Mercer truncation are inconsistent");
  if (raw < 0) {
    out.clamped = true;
    std::cerr << "warning: estimation_error: clamped negative value " << raw << " to 0\n";
  }
  out.value = std::max(raw, 0.0);
  return out;
}

double estimation_error_sq(const PairedDataset& data, const MercerBasis<double>& basis, const AnalyticCovariance& cov,
                           const std::optional<RbfKernel<double>>& exact_gram) {
  return estimation_error_terms(data, basis, cov, exact_gram).value;
}

}  // namespace koopvar
