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

// Gaussian RBF kernel and its Mercer decomposition with respect to the OU
// invariant measure.

#pragma once

#include "koopvar/ou_model.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace koopvar {

/// k(x, y) = exp(-(x - y)^2 / sigma^2)
template <std::floating_point Scalar = double>
struct RbfKernel {
  Scalar bandwidth;

  explicit RbfKernel(Scalar sigma) : bandwidth(sigma) {
    if (!(sigma > 0)) throw std::invalid_argument("RbfKernel: bandwidth must be positive");
  }

  Scalar operator()(Scalar x, Scalar y) const {
    const Scalar d = x - y;
    return std::exp(-d * d / (bandwidth * bandwidth));
  }

  /// sup_x k(x, x)
  Scalar sup() const { return Scalar(1); }
};

template <std::floating_point Scalar>
Scalar kernel_eval(const RbfKernel<Scalar>& k, Scalar x, Scalar y) {
  return k(x, y);
}

template <std::floating_point Scalar>
MatrixX<Scalar> gram_matrix(const RbfKernel<Scalar>& k, std::span<const Scalar> xs, std::span<const Scalar> ys) {
  if (xs.empty() || ys.empty()) throw std::invalid_argument("gram_matrix: empty point set");
  const auto n = static_cast<Eigen::Index>(xs.size());
  const auto p = static_cast<Eigen::Index>(ys.size());
  MatrixX<Scalar> g(n, p);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < n; ++i) g(i, j) = k(xs[i], ys[j]);
  return g;
}

template <std::floating_point Scalar>
MatrixX<Scalar> gram_matrix(const RbfKernel<Scalar>& k, std::span<const Scalar> xs) {
  if (xs.empty()) throw std::invalid_argument("gram_matrix: empty point set");
  const auto n = static_cast<Eigen::Index>(xs.size());
  MatrixX<Scalar> g(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    g(j, j) = Scalar(1);
    for (Eigen::Index i = j + 1; i < n; ++i) g(i, j) = g(j, i) = k(xs[i], xs[j]);
  }
  return g;
}

/// Mercer eigenpairs of the RBF kernel in L^2_mu, mu = N(0, 1/(2 alpha)):
///   lambda_i = sqrt(alpha / C1) (1 / (sigma^2 C1))^i,
///   phi_i(x) = gamma_i exp(-zeta^2 x^2) H_i(sqrt(alpha) eta x),
/// with eta = (1 + 4/(alpha sigma^2))^{1/4}, zeta^2 = alpha (eta^2 - 1)/2,
/// C1 = alpha + zeta^2 + sigma^{-2}, gamma_i = sqrt(eta / (2^i i!)).
///
/// Eigenvalues are held as logarithms. Each phi_i is divided by its quadrature
/// norm at construction; renormalization() reports the applied factors.
template <std::floating_point Scalar = double>
class MercerBasis {
 public:
  MercerBasis(Scalar alpha, Scalar bandwidth, int count, int quadrature_order = kDefaultQuadratureOrder)
      : alpha_(alpha), bandwidth_(bandwidth), count_(count) {
    if (!(alpha > 0)) throw std::invalid_argument("MercerBasis: alpha must be positive");
    if (!(bandwidth > 0)) throw std::invalid_argument("MercerBasis: bandwidth must be positive");
    if (count < 1) throw std::invalid_argument("MercerBasis: count must be positive");
    detail::check_degree(count - 1);
    const Scalar s2 = bandwidth * bandwidth;
    eta_ = std::pow(Scalar(1) + Scalar(4) / (alpha * s2), Scalar(0.25));
    zeta_sq_ = alpha * (eta_ * eta_ - Scalar(1)) / Scalar(2);
    c1_ = alpha + zeta_sq_ + Scalar(1) / s2;
    log_ratio_ = -std::log(s2 * c1_);
    log_lambda0_ = Scalar(0.5) * std::log(alpha / c1_);
    renorm_ = VectorX<Scalar>::Ones(count);

    const int order = std::min(kMaxQuadratureOrder, std::max(quadrature_order, count + 8));
    const auto rule = gauss_hermite<Scalar>(order);
    const auto mu = product_rule(rule);
    const MatrixX<Scalar> phi = feature_matrix(std::span<const Scalar>(mu.nodes.data(), mu.nodes.size()));
    const MatrixX<Scalar> gram = phi * mu.weights.asDiagonal() * phi.transpose();
    renorm_ = gram.diagonal().cwiseSqrt().cwiseInverse();
    norm_deviation_ = (gram.diagonal().array().sqrt() - Scalar(1)).abs().maxCoeff();
  }

  Scalar alpha() const { return alpha_; }
  Scalar bandwidth() const { return bandwidth_; }
  int size() const { return count_; }
  Scalar eta() const { return eta_; }
  Scalar zeta_sq() const { return zeta_sq_; }
  Scalar c1() const { return c1_; }
  /// lambda_{i+1} / lambda_i = 1/(sigma^2 C1)
  Scalar ratio() const { return std::exp(log_ratio_); }
  Scalar hermite_scale() const { return std::sqrt(alpha_) * eta_; }

  Scalar log_eigenvalue(int i) const { return log_lambda0_ + Scalar(i) * log_ratio_; }
  Scalar eigenvalue(int i) const { return std::exp(log_eigenvalue(i)); }
  VectorX<Scalar> eigenvalues() const {
    VectorX<Scalar> out(count_);
    for (int i = 0; i < count_; ++i) out[i] = eigenvalue(i);
    return out;
  }
  Scalar log_gamma(int i) const {
    return Scalar(0.5) * (std::log(eta_) - Scalar(i) * std::numbers::ln2_v<Scalar> - std::lgamma(Scalar(i + 1)));
  }

  /// Factors applied on top of gamma_i so that int phi_i^2 dmu = 1.
  const VectorX<Scalar>& renormalization() const { return renorm_; }
  /// max_i |(int phi_i^2 dmu)^{1/2} - 1| before renormalization.
  Scalar norm_deviation() const { return norm_deviation_; }

  /// mu-rule exact on exp(-c zeta^2 x^2) * polynomial (c = 2 for products of features).
  MeasureRule<Scalar> product_rule(const QuadratureRule<Scalar>& rule, Scalar envelope_multiple = Scalar(2)) const {
    return envelope_rule(rule, Scalar(1) / (Scalar(2) * alpha_), envelope_multiple * zeta_sq_);
  }

  void features(Scalar x, std::span<Scalar> out) const {
    if (static_cast<int>(out.size()) > count_) throw std::out_of_range("MercerBasis: too many features requested");
    hermite_orthonormal_weighted_all<Scalar>(hermite_scale(), zeta_sq_, x, out);
    const Scalar root_eta = std::sqrt(eta_);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= root_eta * renorm_[static_cast<Eigen::Index>(i)];
  }

  Scalar operator()(int i, Scalar x) const {
    if (i < 0 || i >= count_) throw std::out_of_range("MercerBasis: feature index out of range");
    return std::sqrt(eta_) * renorm_[i] * hermite_orthonormal_weighted_eval<Scalar>(i, hermite_scale(), zeta_sq_, x);
  }

  /// Column r holds (phi_0(x_r), ..., phi_{n-1}(x_r)).
  MatrixX<Scalar> feature_matrix(std::span<const Scalar> xs, int n = -1) const {
    if (n < 0) n = count_;
    MatrixX<Scalar> out(n, static_cast<Eigen::Index>(xs.size()));
    for (std::size_t r = 0; r < xs.size(); ++r)
      features(xs[r], std::span<Scalar>(out.col(static_cast<Eigen::Index>(r)).data(), n));
    return out;
  }

 private:
  Scalar alpha_;
  Scalar bandwidth_;
  int count_;
  Scalar eta_ = 0;
  Scalar zeta_sq_ = 0;
  Scalar c1_ = 0;
  Scalar log_ratio_ = 0;
  Scalar log_lambda0_ = 0;
  Scalar norm_deviation_ = 0;
  VectorX<Scalar> renorm_;
};

template <std::floating_point Scalar>
MercerBasis<Scalar> mercer_basis(Scalar alpha, Scalar bandwidth, int count) {
  return MercerBasis<Scalar>(alpha, bandwidth, count);
}

template <std::floating_point Scalar>
Scalar mercer_feature(const MercerBasis<Scalar>& basis, int i, Scalar x) {
  return basis(i, x);
}

/// sum_i c_i^2 / lambda_i for L^2_mu coordinates c_i = <f, e_i>_mu.
template <typename Derived>
typename Derived::Scalar rkhs_norm_sq(const MercerBasis<typename Derived::Scalar>& basis,
                                      const Eigen::MatrixBase<Derived>& coeffs) {
  using Scalar = typename Derived::Scalar;
  if (coeffs.size() > basis.size()) throw std::out_of_range("rkhs_norm_sq: more coefficients than features");
  Scalar acc = 0;
  for (Eigen::Index i = 0; i < coeffs.size(); ++i)
    acc += coeffs[i] * coeffs[i] * std::exp(-basis.log_eigenvalue(static_cast<int>(i)));
  return acc;
}

/// <f, phi_i>_mu for every feature, by a mu-rule matched to exp(-envelope x^2)
/// (default: the feature envelope zeta^2, right for polynomially growing f).
template <std::floating_point Scalar, typename F>
VectorX<Scalar> l2mu_coeffs(const MercerBasis<Scalar>& basis, F&& f, const QuadratureRule<Scalar>& rule,
                            Scalar envelope = Scalar(-1)) {
  if (envelope < 0) envelope = basis.zeta_sq();
  const auto mu = envelope_rule(rule, Scalar(1) / (Scalar(2) * basis.alpha()), envelope);
  VectorX<Scalar> out = VectorX<Scalar>::Zero(basis.size());
  std::vector<Scalar> buf(basis.size());
  for (Eigen::Index q = 0; q < mu.size(); ++q) {
    const Scalar fx = f(mu.nodes[q]);
    if (fx == Scalar(0)) continue;
    basis.features(mu.nodes[q], buf);
    for (int i = 0; i < basis.size(); ++i) out[i] += mu.weights[q] * fx * buf[i];
  }
  return out;
}

/// (K^t phi_i)(x) for i < out.size(). The feature envelope is merged into the
/// transition density, leaving a polynomial integrand that the rule handles exactly.
template <std::floating_point Scalar>
void propagate_features(const MercerBasis<Scalar>& basis, const OuSystem<Scalar>& sys, Scalar x,
                        const QuadratureRule<Scalar>& rule, std::span<std::type_identity_t<Scalar>> out) {
  const int n = static_cast<int>(out.size());
  if (n > basis.size()) throw std::out_of_range("propagate_features: too many features requested");
  const Scalar c = basis.zeta_sq();
  const Scalar mean = sys.decay() * x;
  const Scalar s2 = sys.transition_variance();
  const Scalar denom = Scalar(1) + Scalar(2) * c * s2;
  const Scalar spread = std::sqrt(Scalar(2) * s2 / denom);
  const Scalar center = mean / denom;
  const Scalar scale =
      std::exp(-c * mean * mean / denom) / std::sqrt(denom * std::numbers::pi_v<Scalar>) * std::sqrt(basis.eta());
  std::fill(out.begin(), out.end(), Scalar(0));
  std::vector<Scalar> h(n);
  for (int q = 0; q < rule.order(); ++q) {
    hermite_orthonormal_weighted_all<Scalar>(basis.hermite_scale(), Scalar(0), center + spread * rule.nodes[q], h);
    for (int i = 0; i < n; ++i) out[i] += rule.weights[q] * h[i];
  }
  for (int i = 0; i < n; ++i) out[i] *= scale * basis.renormalization()[i];
}

/// Envelope of x -> phi_k(x) (K^t phi_l)(x): zeta^2 + zeta^2 a^2 / (1 + 2 zeta^2 s^2).
template <std::floating_point Scalar>
Scalar propagated_product_envelope(const MercerBasis<Scalar>& basis, const OuSystem<Scalar>& sys) {
  const Scalar c = basis.zeta_sq();
  const Scalar a = sys.decay();
  return c + c * a * a / (Scalar(1) + Scalar(2) * c * sys.transition_variance());
}

/// Column r holds (K^t phi_i)(x_r), i < n.
template <std::floating_point Scalar>
MatrixX<Scalar> propagated_feature_matrix(const MercerBasis<Scalar>& basis, const OuSystem<Scalar>& sys,
                                          std::span<const Scalar> xs, const QuadratureRule<Scalar>& rule,
                                          int n = -1) {
  if (n < 0) n = basis.size();
  MatrixX<Scalar> out(n, static_cast<Eigen::Index>(xs.size()));
  for (std::size_t r = 0; r < xs.size(); ++r)
    propagate_features(basis, sys, xs[r], rule, std::span<Scalar>(out.col(static_cast<Eigen::Index>(r)).data(), n));
  return out;
}

}  // namespace koopvar
