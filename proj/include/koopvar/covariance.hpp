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

// Analytic and empirical cross-covariance quantities for the OU test case:
// pair integrals, Hilbert-Schmidt norms, the exact variance of the
// sliding-window estimator, and the estimation error of a given dataset.

#pragma once

#include "koopvar/rkhs.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace koopvar {

enum class SamplingMode { iid, sliding_window };

inline const char* to_string(SamplingMode m) { return m == SamplingMode::iid ? "iid" : "sliding_window"; }

/// Snapshot pairs (x_k, y_k) with y_k drawn from rho_t(x_k, .).
struct PairedDataset {
  std::vector<double> xs;
  std::vector<double> ys;
  SamplingMode mode = SamplingMode::iid;
  std::uint64_t seed = 0;
  double lag = 0;

  std::size_t size() const { return xs.size(); }
};

/// m independent pairs with x_k ~ mu.
PairedDataset sample_iid_pairs(const OuSystem<double>& sys, std::size_t m, std::uint64_t seed);
/// x_k = X_{kt}, y_k = X_{(k+1)t} from one trajectory.
PairedDataset sliding_window(const Trajectory<double>& traj, double lag);
/// Sliding-window pairs from a fresh exact trajectory of length m + 1.
PairedDataset sample_sliding_window(const OuSystem<double>& sys, std::size_t m, std::uint64_t seed);

enum class PairIntegralRoute {
  transition_quadrature,  // M_kl = <phi_k, K^t phi_l>_mu with K^t phi_l integrated exactly
  koopman_spectral,       // M = A diag(q) A^T truncated after n_koopman modes
};

struct CovarianceOptions {
  int n_koopman = 15;
  PairIntegralRoute route = PairIntegralRoute::transition_quadrature;
  int quadrature_order = kDefaultQuadratureOrder;
};

/// Cached analytic quantities for one (alpha, t, sigma, N_mercer, N_koopman).
struct AnalyticCovariance {
  OuSystem<double> system{1.0, 1.0};
  CovarianceOptions options;
  int n_mercer = 0;
  Eigen::VectorXd lambda;  // lambda_0 .. lambda_{N-1}
  Eigen::VectorXd q;       // q_1 .. q_{J-1}
  Eigen::MatrixXd A;       // <phi_i, psi_j>_mu, N x J
  Eigen::MatrixXd M;       // int phi_k(x) phi_l(y) dmu_{0,t}, N x N
  double hs_norm_sq = 0;
  /// <K^t phi_N, phi_N>_mu for the truncated kernel diagonal phi_N = sum_k lambda_k phi_k^2.
  double diagonal_moment = 0;
  /// diagonal_moment - hs_norm_sq: the variance of a single pair under the truncated series.
  double e0 = 0;
  /// 1 - hs_norm_sq: the same with the exact kernel diagonal k(x, x) = 1.
  double e0_unit_diagonal = 0;
  Eigen::VectorXd d;  // d_1 .. d_{J-1}

  int n_koopman() const { return options.n_koopman; }
};

/// A_ij = int phi_i psi_j dmu.
Eigen::MatrixXd overlap_matrix(const MercerBasis<double>& basis, const KoopmanBasis<double>& koopman,
                               const QuadratureRule<double>& rule);

/// M = A diag(q) A^T; q holds q_0 .. q_{J-1}.
Eigen::MatrixXd pair_integral_matrix(const Eigen::MatrixXd& A, const Eigen::VectorXd& q);

/// M_kl = <phi_k, K^t phi_l>_mu without a Koopman truncation.
Eigen::MatrixXd pair_integral_matrix_direct(const MercerBasis<double>& basis, const OuSystem<double>& sys,
                                            const QuadratureRule<double>& rule);

/// sum_{k,l} lambda_k lambda_l M_kl^2
double hs_norm_sq_analytic(const Eigen::VectorXd& lambda, const Eigen::MatrixXd& M);
double hs_norm_sq_analytic(const MercerBasis<double>& basis, const Eigen::MatrixXd& M);

/// <K^t phi_N, phi_N>_mu with phi_N = sum_{k<N} lambda_k phi_k^2.
double truncated_diagonal_moment(const MercerBasis<double>& basis, const OuSystem<double>& sys,
                                 const QuadratureRule<double>& rule);

/// E_0 = diagonal - hs_norm_sq. Throws if hs_norm_sq lies outside [0, 1] or above diagonal.
double e0(double hs_norm_sq, double diagonal = 1.0);

/// d_l = sum_{k,m} lambda_k lambda_m I_{k m l} I_{m k l}, I_{k m l} = int phi_k psi_l K^t phi_m dmu,
/// for l = 1 .. J-1. The spectral route expands K^t phi_m in the first J Koopman modes.
Eigen::VectorXd d_coefficients(const MercerBasis<double>& basis, const OuSystem<double>& sys,
                               const KoopmanBasis<double>& koopman, const QuadratureRule<double>& rule,
                               PairIntegralRoute route = PairIntegralRoute::transition_quadrature,
                               const Eigen::MatrixXd* A = nullptr);

AnalyticCovariance analytic_covariance(const MercerBasis<double>& basis, const OuSystem<double>& sys,
                                       const CovarianceOptions& options = {});

/// F_m(z) = 2 sum_{k=1}^{m-1} ((m-k)/m) z^{k-1}, closed form away from z = 1.
double f_m(double z, long long m);
/// The defining finite sum, evaluated by Horner's rule.
double f_m_series(double z, long long m);

struct VarianceBreakdown {
  double e0 = 0;
  double correction = 0;  // sum_l d_l F_m(q_l)
  double sigma_m_sq = 0;
  double sigma_inf_sq = 0;
  double iid_variance = 0;  // e0 / m
  long long m = 0;
};

/// sigma_m^2 = e0 + sum_l d_l F_m(q_l); d and q are indexed from l = 1.
VarianceBreakdown sigma_m_sq(double e0, const Eigen::VectorXd& d, const Eigen::VectorXd& q, long long m);
VarianceBreakdown sigma_m_sq(const AnalyticCovariance& cov, long long m);

/// (1/m) sum_r phi_k(x_r) phi_l(y_r), k, l < n.
Eigen::MatrixXd empirical_pair_moments(const PairedDataset& data, const MercerBasis<double>& basis, int n = -1);

/// ||C_hat||_HS^2 = (1/m^2) sum_{k,l} k(x_k, x_l) k(y_k, y_l), exact.
double empirical_hs_norm_sq(const PairedDataset& data, const RbfKernel<double>& k);
/// The same through the Mercer series truncated at n terms.
double empirical_hs_norm_sq_series(const PairedDataset& data, const MercerBasis<double>& basis, int n = -1);

/// <C_hat, C^t>_HS = sum_{k,l} lambda_k lambda_l M_kl G_kl.
double empirical_cross_inner(const PairedDataset& data, const MercerBasis<double>& basis, const Eigen::MatrixXd& M);

struct EstimationError {
  double hs_norm_sq = 0;
  double empirical_norm_sq = 0;
  double cross_inner = 0;
  double value = 0;  // ||C^t - C_hat||_HS^2
  bool clamped = false;
};

inline constexpr double kNegativeErrorTolerance = 1e-10;

/// ||C^t||^2 + ||C_hat||^2 - 2 <C_hat, C^t>. All terms use the Mercer series of
/// the covariance unless exact_gram is given, in which case ||C_hat||^2 uses the Gram form.
EstimationError estimation_error_terms(const PairedDataset& data, const MercerBasis<double>& basis,
                                       const AnalyticCovariance& cov,
                                       const std::optional<RbfKernel<double>>& exact_gram = std::nullopt);

double estimation_error_sq(const PairedDataset& data, const MercerBasis<double>& basis, const AnalyticCovariance& cov,
                           const std::optional<RbfKernel<double>>& exact_gram = std::nullopt);

}  // namespace koopvar
