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

#include "koopvar/predictor.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace koopvar {

namespace {

constexpr Eigen::Index kChunk = 256;

void fix_signs(Eigen::MatrixXd& V) {
  for (Eigen::Index j = 0; j < V.cols(); ++j) {
    Eigen::Index r;
    V.col(j).cwiseAbs().maxCoeff(&r);
    if (V(r, j) < 0) V.col(j) *= -1;
  }
}

Eigen::VectorXd random_unit(Eigen::Index n, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = nd(gen);
  return v.normalized();
}

// Chunked K(rows, centers) * W.
Eigen::MatrixXd kernel_times(const RbfKernel<double>& k, std::span<const double> rows, std::span<const double> centers,
                             const Eigen::MatrixXd& W) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd out(n, W.cols());
  for (Eigen::Index r0 = 0; r0 < n; r0 += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - r0);
    const Eigen::MatrixXd block = gram_matrix(k, rows.subspan(static_cast<std::size_t>(r0), static_cast<std::size_t>(len)), centers);
    out.middleRows(r0, len).noalias() = block * W;
  }
  return out;
}

}  // namespace

EigenSystem sym_eig(const Eigen::MatrixXd& S) {
  if (S.rows() != S.cols()) throw std::invalid_argument("sym_eig: matrix must be square");
  if (S.rows() > 10000) throw std::invalid_argument("sym_eig: dense decomposition limited to dimension 10^4");
  const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("sym_eig: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(S);
  if (solver.info() != Eigen::Success) throw std::runtime_error("sym_eig: eigensolver did not converge");
  EigenSystem out;
  out.source_dim = static_cast<int>(S.rows());
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  fix_signs(out.vectors);
  return out;
}

EigenSystem lanczos_top(const Eigen::MatrixXd& S, int count, const LanczosOptions& options) {
  const Eigen::Index n = S.rows();
  if (S.cols() != n) throw std::invalid_argument("lanczos_top: matrix must be square");
  if (count < 1 || count > n) throw std::invalid_argument("lanczos_top: count must lie in [1, dim]");
  const Eigen::Index max_it =
      std::min<Eigen::Index>(n, options.max_iterations > 0 ? options.max_iterations : std::max(300, 10 * count));
  const double norm_est = std::max(S.cwiseAbs().maxCoeff(), 1e-300);

  std::mt19937_64 gen(options.seed);
  Eigen::MatrixXd Q(n, max_it);
  Eigen::VectorXd alpha(max_it), beta(max_it);
  Eigen::VectorXd q = random_unit(n, gen);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ritz;
  Eigen::Index k = 0;
  bool converged = false;
  double worst = 0;

  for (Eigen::Index j = 0; j < max_it; ++j) {
    Q.col(j) = q;
    Eigen::VectorXd w = S * q;
    alpha[j] = q.dot(w);
    w -= alpha[j] * q;
    if (j > 0) w -= beta[j - 1] * Q.col(j - 1);
    for (int pass = 0; pass < 2; ++pass) w -= Q.leftCols(j + 1) * (Q.leftCols(j + 1).transpose() * w);
    const double b = w.norm();
    k = j + 1;

    if (k >= count && (k % 5 == 0 || k == max_it || b <= 1e-14 * norm_est)) {
      Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, k);
      for (Eigen::Index i = 0; i < k; ++i) {
        T(i, i) = alpha[i];
        if (i + 1 < k) T(i, i + 1) = T(i + 1, i) = beta[i];
      }
      ritz.compute(T);
      const double top = std::max(std::abs(ritz.eigenvalues()[k - 1]), 1e-300);
      worst = 0;
      for (int i = 0; i < count; ++i)
        worst = std::max(worst, std::abs(b * ritz.eigenvectors()(k - 1, k - 1 - i)) / top);
      if (worst <= options.tolerance) {
        converged = true;
        break;
      }
    }
    if (j + 1 == max_it) break;
    if (b <= 1e-14 * norm_est) {
      // invariant subspace: restart orthogonally to Q
      Eigen::VectorXd r = random_unit(n, gen);
      for (int pass = 0; pass < 2; ++pass) r -= Q.leftCols(j + 1) * (Q.leftCols(j + 1).transpose() * r);
      beta[j] = 0;
      q = r.normalized();
    } else {
      beta[j] = b;
      q = w / b;
    }
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "lanczos_top: no convergence after " << k << " iterations (relative residual " << worst << ")";
    throw std::runtime_error(msg.str());
  }
  EigenSystem out;
  out.source_dim = static_cast<int>(n);
  out.values = ritz.eigenvalues().tail(count).reverse();
  out.vectors = Q.leftCols(k) * ritz.eigenvectors().rightCols(count).rowwise().reverse();
  for (int i = 0; i < count; ++i) out.vectors.col(i).normalize();
  fix_signs(out.vectors);
  return out;
}

EigenSystem top_eigenpairs(const Eigen::MatrixXd& S, int count, int dense_threshold) {
  if (count < 1 || count > S.rows()) throw std::invalid_argument("top_eigenpairs: count must lie in [1, dim]");
  if (S.rows() > dense_threshold) return lanczos_top(S, count);
  EigenSystem full = sym_eig(S);
  full.values.conservativeResize(count);
  full.vectors.conservativeResize(Eigen::NoChange, count);
  return full;
}

double orthonormality_error(const EigenSystem& es) {
  const auto k = es.vectors.cols();
  return (es.vectors.transpose() * es.vectors - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff();
}

double reconstruction_error(const Eigen::MatrixXd& S, const EigenSystem& es) {
  return (S - es.vectors * es.values.asDiagonal() * es.vectors.transpose()).cwiseAbs().maxCoeff();
}

double max_residual(const Eigen::MatrixXd& S, const EigenSystem& es) {
  return (S * es.vectors - es.vectors * es.values.asDiagonal()).colwise().norm().maxCoeff();
}

EmpiricalFeatures empirical_features(const PairedDataset& data, const RbfKernel<double>& k, int N,
                                     const EmpiricalFeatureOptions& options) {
  const std::size_t m = data.size();
  if (m == 0) throw std::invalid_argument("empirical_features: empty dataset");
  if (N < 1 || static_cast<std::size_t>(N) > m) throw std::invalid_argument("empirical_features: need 1 <= N <= m");
  const std::size_t mf = std::min(m, options.max_feature_points);
  if (static_cast<std::size_t>(N) > mf) throw std::invalid_argument("empirical_features: N exceeds feature points");

  EmpiricalFeatures out;
  out.kernel = k;
  out.N = N;
  out.total_points = m;
  out.data_xs.assign(data.xs.begin(), data.xs.begin() + static_cast<std::ptrdiff_t>(mf));
  if (mf < m) {
    std::ostringstream msg;
    msg << "features from the first " << mf << " of " << m << " states";
    out.warnings.push_back(msg.str());
  }

  const int count = static_cast<int>(std::min<std::size_t>(N + 1, mf));
  {
    Eigen::MatrixXd G = gram_matrix(k, std::span<const double>(out.data_xs));
    G /= static_cast<double>(mf);
    if (static_cast<Eigen::Index>(mf) > options.dense_threshold) {
      out.eigensystem = lanczos_top(G, count);
    } else {
      EigenSystem full = sym_eig(G);
      if (full.values[full.size() - 1] < -options.psd_tolerance) {
        std::ostringstream msg;
        msg << "empirical_features: Gramian eigenvalue " << full.values[full.size() - 1] << " is negative";
        throw std::runtime_error(msg.str());
      }
      full.values.conservativeResize(count);
      full.vectors.conservativeResize(Eigen::NoChange, count);
      out.eigensystem = std::move(full);
    }
  }
  const Eigen::VectorXd& lam = out.eigensystem.values;
  if (!(lam[N - 1] >= options.lambda_floor)) {
    std::ostringstream msg;
    msg << "empirical_features: lambda_hat_" << N << " = " << lam[N - 1] << " below floor " << options.lambda_floor;
    throw std::runtime_error(msg.str());
  }
  if (count > N && (lam[N - 1] - lam[N]) < options.tie_tolerance * lam[N - 1]) {
    std::ostringstream msg;
    msg << "near-tied eigenvalues at the truncation boundary: " << lam[N - 1] << ", " << lam[N];
    out.warnings.push_back(msg.str());
  }
  const double root_m = std::sqrt(static_cast<double>(mf));
  out.coefficients = out.eigensystem.vectors.leftCols(N) *
                     (root_m * lam.head(N)).cwiseInverse().asDiagonal();
  return out;
}

Eigen::MatrixXd evaluate_features(const EmpiricalFeatures& features, std::span<const double> xs) {
  return kernel_times(features.kernel, xs, features.data_xs, features.coefficients);
}

Eigen::VectorXd whitening_values(const EmpiricalFeatures& features) {
  const Eigen::MatrixXd E = evaluate_features(features, features.data_xs);
  return E.colwise().squaredNorm().transpose() / static_cast<double>(features.data_xs.size());
}

Eigen::VectorXd feature_rkhs_norms_sq(const EmpiricalFeatures& features) {
  const Eigen::MatrixXd KC = evaluate_features(features, features.data_xs);
  return (features.coefficients.array() * KC.array()).colwise().sum().transpose();
}

double KernelExpansion::operator()(double x) const {
  double s = 0;
  for (std::size_t l = 0; l < centers.size(); ++l) s += weights[static_cast<Eigen::Index>(l)] * kernel(centers[l], x);
  return s;
}

std::vector<double> KernelExpansion::operator()(std::span<const double> xs) const {
  const Eigen::MatrixXd v = kernel_times(kernel, xs, centers, weights);
  return {v.data(), v.data() + v.size()};
}

KernelExpansion prediction_expansion(const EmpiricalFeatures& features, const PairedDataset& data,
                                     const std::function<double(double)>& obs) {
  const auto m = static_cast<Eigen::Index>(data.size());
  if (data.ys.size() != data.xs.size()) throw std::invalid_argument("prediction_expansion: xs/ys size mismatch");
  Eigen::VectorXd phi_y(m);
  for (Eigen::Index k = 0; k < m; ++k) phi_y[k] = obs(data.ys[static_cast<std::size_t>(k)]);
  const Eigen::MatrixXd E = evaluate_features(features, data.xs);
  const Eigen::VectorXd a = E.transpose() * phi_y / static_cast<double>(m);
  return {features.data_xs, features.coefficients * a, features.kernel};
}

std::vector<double> predict(const EmpiricalFeatures& features, const PairedDataset& data,
                            const std::function<double(double)>& obs, std::span<const double> x_eval) {
  return prediction_expansion(features, data, obs)(x_eval);
}

Eigen::VectorXd pseudo_inverse_prediction_weights(const PairedDataset& data, const RbfKernel<double>& k,
                                                  const std::function<double(double)>& obs) {
  const auto m = static_cast<Eigen::Index>(data.size());
  Eigen::MatrixXd G = gram_matrix(k, std::span<const double>(data.xs));
  G /= static_cast<double>(m);
  Eigen::VectorXd b(m);
  for (Eigen::Index i = 0; i < m; ++i) b[i] = obs(data.ys[static_cast<std::size_t>(i)]) / static_cast<double>(m);
  return Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(G).pseudoInverse() * b;
}

GaussianObservable<double> mercer_observable(const MercerBasis<double>& basis) {
  return {0.0, 0.5 / basis.zeta_sq(), std::sqrt(basis.eta()) * basis.renormalization()[0]};
}

double TruncatedPrediction::operator()(double x) const {
  Eigen::VectorXd phi(coeffs.size());
  basis.features(x, std::span<double>(phi.data(), static_cast<std::size_t>(phi.size())));
  return coeffs.dot(phi);
}

TruncatedPrediction analytic_truncated_prediction(const MercerBasis<double>& basis, const OuSystem<double>& sys,
                                                  const GaussianObservable<double>& obs, int N,
                                                  int quadrature_order) {
  if (N < 1 || N > basis.size()) throw std::invalid_argument("analytic_truncated_prediction: N out of range");
  const auto image = propagate_gaussian(sys, obs);
  // mu(x) K^t phi(x) exp(-zeta^2 x^2) = Z N(x; center, 1/(2A))
  const double alpha = sys.alpha();
  const double A = alpha + basis.zeta_sq() + 0.5 / image.variance;
  const double B = image.mean / image.variance;
  const double C = image.mean * image.mean / (2 * image.variance);
  const double Z = image.prefactor * std::sqrt(alpha / A) * std::exp(B * B / (4 * A) - C);
  const auto rule = gauss_hermite<double>(std::min(kMaxQuadratureOrder, std::max(quadrature_order, N + 8)));
  const auto nodes = gaussian_measure_rule(rule, B / (2 * A), 0.5 / A);

  Eigen::VectorXd c = Eigen::VectorXd::Zero(N);
  Eigen::VectorXd h(N);
  for (Eigen::Index i = 0; i < nodes.nodes.size(); ++i) {
    hermite_orthonormal_weighted_all<double>(basis.hermite_scale(), 0.0, nodes.nodes[i],
                                             std::span<double>(h.data(), static_cast<std::size_t>(N)));
    c += nodes.weights[i] * h;
  }
  c = (Z * std::sqrt(basis.eta()) * c.array() * basis.renormalization().head(N).array()).matrix();
  return {basis, c};
}

double l2mu_error(const std::function<double(double)>& f, const std::function<double(double)>& g,
                  const MeasureRule<double>& rule) {
  double s = 0;
  for (Eigen::Index i = 0; i < rule.nodes.size(); ++i) {
    const double d = f(rule.nodes[i]) - g(rule.nodes[i]);
    s += rule.weights[i] * d * d;
  }
  return std::sqrt(s);
}

MeasureRule<double> prediction_error_rule(const OuSystem<double>& sys, double bandwidth) {
  if (!(bandwidth > 0)) throw std::invalid_argument("prediction_error_rule: bandwidth must be positive");
  constexpr double half_width = 8;
  const double sd = std::sqrt(sys.invariant_variance());
  const int count = static_cast<int>(std::ceil(2 * half_width * sd / (bandwidth / 6))) + 1;
  return trapezoid_measure_rule(0.0, sys.invariant_variance(), half_width, std::max(count, 65));
}

}  // namespace koopvar
