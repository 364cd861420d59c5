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

// Empirical Koopman prediction from kernel Gramians: eigendecomposition of
// (1/m) K_X, whitened empirical Mercer features and the truncated predictor.

#pragma once

#include "koopvar/covariance.hpp"

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace koopvar {

/// Eigenpairs in descending order; columns of vectors are orthonormal.
struct EigenSystem {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  int source_dim = 0;

  int size() const { return static_cast<int>(values.size()); }
};

/// Full decomposition of a dense symmetric matrix.
EigenSystem sym_eig(const Eigen::MatrixXd& S);

struct LanczosOptions {
  int max_iterations = 0;  // 0: chosen from the requested count
  double tolerance = 1e-13;
  std::uint64_t seed = 0x5eed;
};

/// Leading `count` eigenpairs by Lanczos with full reorthogonalisation.
EigenSystem lanczos_top(const Eigen::MatrixXd& S, int count, const LanczosOptions& options = {});

/// Leading `count` eigenpairs; dense below `dense_threshold`, Lanczos above.
EigenSystem top_eigenpairs(const Eigen::MatrixXd& S, int count, int dense_threshold = 500);

double orthonormality_error(const EigenSystem& es);
/// max_{ij} |S - V diag(values) V^T| (meaningful for full decompositions).
double reconstruction_error(const Eigen::MatrixXd& S, const EigenSystem& es);
/// max_j ||S v_j - lambda_j v_j||.
double max_residual(const Eigen::MatrixXd& S, const EigenSystem& es);

struct EmpiricalFeatureOptions {
  double lambda_floor = 1e-12;
  std::size_t max_feature_points = 10000;
  int dense_threshold = 500;
  double tie_tolerance = 1e-8;
  double psd_tolerance = 1e-10;
};

/// e_hat_j = sum_l coefficients(l, j) k(x_l, .) with x_l the feature points.
struct EmpiricalFeatures {
  std::vector<double> data_xs;
  EigenSystem eigensystem;
  int N = 0;
  Eigen::MatrixXd coefficients;
  RbfKernel<double> kernel{1.0};
  std::size_t total_points = 0;
  std::vector<std::string> warnings;

  bool subsampled() const { return data_xs.size() < total_points; }
  double eigenvalue(int j) const { return eigensystem.values[j]; }
};

/// Features from the first min(m, max_feature_points) states of `data`.
EmpiricalFeatures empirical_features(const PairedDataset& data, const RbfKernel<double>& k, int N,
                                     const EmpiricalFeatureOptions& options = {});

/// Row r holds (e_hat_1(x_r), ..., e_hat_N(x_r)).
Eigen::MatrixXd evaluate_features(const EmpiricalFeatures& features, std::span<const double> xs);

/// (1/m_f) sum_k e_hat_j(x_k)^2 for every retained j; equals 1 by construction.
Eigen::VectorXd whitening_values(const EmpiricalFeatures& features);
/// ||e_hat_j||_H^2; equals 1/lambda_hat_j by construction.
Eigen::VectorXd feature_rkhs_norms_sq(const EmpiricalFeatures& features);

/// x -> sum_l weights_l k(centers_l, x).
struct KernelExpansion {
  std::vector<double> centers;
  Eigen::VectorXd weights;
  RbfKernel<double> kernel{1.0};

  double operator()(double x) const;
  std::vector<double> operator()(std::span<const double> xs) const;
};

/// K_hat phi as a kernel expansion over the feature points. The inner products
/// <C_hat^t phi, e_hat_j> = (1/m) sum_k phi(y_k) e_hat_j(x_k) use all m pairs.
KernelExpansion prediction_expansion(const EmpiricalFeatures& features, const PairedDataset& data,
                                     const std::function<double(double)>& obs);

std::vector<double> predict(const EmpiricalFeatures& features, const PairedDataset& data,
                            const std::function<double(double)>& obs, std::span<const double> x_eval);

/// (C_hat)^+ C_hat^t phi assembled with a pseudo-inverse of (1/m) K_X; returns
/// the kernel weights over data.xs. Reference for small m only.
Eigen::VectorXd pseudo_inverse_prediction_weights(const PairedDataset& data, const RbfKernel<double>& k,
                                                  const std::function<double(double)>& obs);

/// The Mercer feature phi_i as a Gaussian observable (i = 0 only).
GaussianObservable<double> mercer_observable(const MercerBasis<double>& basis);

/// x -> sum_{j<N} <K^t phi, phi_j>_mu phi_j(x).
struct TruncatedPrediction {
  MercerBasis<double> basis;
  Eigen::VectorXd coeffs;

  double operator()(double x) const;
};

TruncatedPrediction analytic_truncated_prediction(const MercerBasis<double>& basis, const OuSystem<double>& sys,
                                                  const GaussianObservable<double>& obs, int N,
                                                  int quadrature_order = kDefaultQuadratureOrder);

/// ||f - g||_{L^2(rule)}.
double l2mu_error(const std::function<double(double)>& f, const std::function<double(double)>& g,
                  const MeasureRule<double>& rule);

/// Trapezoid mu-rule resolving features of width `bandwidth` (spacing bandwidth/6).
MeasureRule<double> prediction_error_rule(const OuSystem<double>& sys, double bandwidth);

}  // namespace koopvar
