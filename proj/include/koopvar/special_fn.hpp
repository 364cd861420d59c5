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

// Hermite polynomials and Gauss-Hermite quadrature.

#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <concepts>
#include <numbers>
#include <span>
#include <type_traits>
#include <stdexcept>
#include <string>
#include <vector>

namespace koopvar {

inline constexpr int kMaxHermiteDegree = 512;
inline constexpr int kMaxQuadratureOrder = 512;
inline constexpr int kDefaultQuadratureOrder = 128;

template <std::floating_point Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <std::floating_point Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

inline void check_degree(int degree) {
  if (degree < 0) throw std::invalid_argument("hermite: negative degree");
  if (degree > kMaxHermiteDegree)
    throw std::overflow_error("hermite: degree " + std::to_string(degree) +
                              " exceeds cap " + std::to_string(kMaxHermiteDegree) +
                              " (double-precision recurrence overflow risk)");
}

// Magnitude at which the recurrence pair is rescaled; the dropped factor is
// carried in a log-scale accumulator.
template <typename Scalar>
inline constexpr Scalar kRescaleAt = Scalar(1e150);

// Runs a three-term recurrence p_{n+1} = a_n(u) p_n - b_n p_{n-1}, writing
// exp(-damping x^2) * p_n into out[0..count). Carried values are rescaled so
// that nothing overflows before the damping factor is applied.
template <typename Scalar, typename Step>
void damped_recurrence(int count, Scalar p0, Scalar p1, Scalar log_damp, Step step,
                       Scalar* out) {
  if (count <= 0) return;
  using std::exp;
  using std::abs;
  Scalar shift = 0;
  Scalar factor = exp(log_damp);
  out[0] = p0 * factor;
  if (count == 1) return;
  out[1] = p1 * factor;
  Scalar prev = p0, cur = p1;
  for (int n = 1; n + 1 < count; ++n) {
    Scalar next = step(n, cur, prev);
    prev = cur;
    cur = next;
    if (abs(cur) > kRescaleAt<Scalar>) {
      cur /= kRescaleAt<Scalar>;
      prev /= kRescaleAt<Scalar>;
      shift += std::log(kRescaleAt<Scalar>);
      factor = exp(shift + log_damp);
    }
    out[n + 1] = cur * factor;
  }
}

}  // namespace detail

/// Physicist's Hermite polynomial H_degree(x).
template <std::floating_point Scalar>
Scalar hermite_eval(int degree, Scalar x) {
  detail::check_degree(degree);
  std::vector<Scalar> buf(degree + 1);
  detail::damped_recurrence<Scalar>(
      degree + 1, Scalar(1), Scalar(2) * x, Scalar(0),
      [x](int n, Scalar cur, Scalar prev) { return Scalar(2) * x * cur - Scalar(2 * n) * prev; },
      buf.data());
  return buf[degree];
}

/// exp(-damping x^2) H_degree(scale x), safe for |x| <= 50 and degree <= 512.
template <std::floating_point Scalar>
Scalar hermite_weighted_eval(int degree, Scalar scale, Scalar damping, Scalar x) {
  detail::check_degree(degree);
  const Scalar u = scale * x;
  std::vector<Scalar> buf(degree + 1);
  detail::damped_recurrence<Scalar>(
      degree + 1, Scalar(1), Scalar(2) * u, -damping * x * x,
      [u](int n, Scalar cur, Scalar prev) { return Scalar(2) * u * cur - Scalar(2 * n) * prev; },
      buf.data());
  return buf[degree];
}

/// Writes exp(-damping x^2) h_n(scale x) for n < out.size(), where
/// h_n = H_n / sqrt(2^n n!) is orthonormal for the weight exp(-u^2)/sqrt(pi).
template <std::floating_point Scalar>
void hermite_orthonormal_weighted_all(Scalar scale, Scalar damping, Scalar x, std::span<std::type_identity_t<Scalar>> out) {
  if (out.empty()) return;
  detail::check_degree(static_cast<int>(out.size()) - 1);
  const Scalar u = scale * x;
  detail::damped_recurrence<Scalar>(
      static_cast<int>(out.size()), Scalar(1), std::numbers::sqrt2_v<Scalar> * u, -damping * x * x,
      [u](int n, Scalar cur, Scalar prev) {
        return std::sqrt(Scalar(2) / Scalar(n + 1)) * u * cur -
               std::sqrt(Scalar(n) / Scalar(n + 1)) * prev;
      },
      out.data());
}

template <std::floating_point Scalar>
Scalar hermite_orthonormal_weighted_eval(int degree, Scalar scale, Scalar damping, Scalar x) {
  detail::check_degree(degree);
  std::vector<Scalar> buf(degree + 1);
  hermite_orthonormal_weighted_all<Scalar>(scale, damping, x, buf);
  return buf[degree];
}

/// Gauss-Hermite rule for the weight exp(-x^2). log_weights is kept alongside
/// weights because rescaled rules multiply tiny tail weights by large factors.
template <std::floating_point Scalar>
struct QuadratureRule {
  VectorX<Scalar> nodes;
  VectorX<Scalar> weights;
  VectorX<Scalar> log_weights;

  int order() const { return static_cast<int>(nodes.size()); }
};

/// Golub-Welsch: nodes are the eigenvalues of the symmetric Jacobi matrix,
/// polished by Newton steps on h_n; weights come from the Christoffel function.
template <std::floating_point Scalar>
QuadratureRule<Scalar> gauss_hermite(int order) {
  if (order < 1 || order > kMaxQuadratureOrder)
    throw std::invalid_argument("gauss_hermite: order must lie in [1, " +
                                std::to_string(kMaxQuadratureOrder) + "]");
  const Eigen::Index n = order;
  VectorX<Scalar> diag = VectorX<Scalar>::Zero(n);
  VectorX<Scalar> sub(std::max<Eigen::Index>(n - 1, 0));
  for (Eigen::Index k = 0; k + 1 < n; ++k) sub[k] = std::sqrt(Scalar(k + 1) / Scalar(2));

  VectorX<Scalar> nodes(n);
  if (n == 1) {
    nodes[0] = 0;
  } else {
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver;
    solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
      throw std::runtime_error("gauss_hermite: tridiagonal eigensolver did not converge (order " +
                               std::to_string(order) + ")");
    nodes = solver.eigenvalues();
  }

  std::vector<Scalar> h(order + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int it = 0; it < 2; ++it) {
      hermite_orthonormal_weighted_all<Scalar>(Scalar(1), Scalar(0), nodes[i], h);
      const Scalar deriv = std::sqrt(Scalar(2 * order)) * h[order - 1];
      if (deriv != Scalar(0)) nodes[i] -= h[order] / deriv;
    }
  }
  for (Eigen::Index i = 0; i < n / 2; ++i) {
    const Scalar a = (nodes[n - 1 - i] - nodes[i]) / Scalar(2);
    nodes[i] = -a;
    nodes[n - 1 - i] = a;
  }
  if (n % 2 == 1) nodes[n / 2] = 0;

  QuadratureRule<Scalar> rule;
  rule.nodes = nodes;
  rule.weights.resize(n);
  rule.log_weights.resize(n);
  std::vector<Scalar> hf(order);
  for (Eigen::Index i = 0; i < n; ++i) {
    // Hermite functions h_k(x) exp(-x^2/2) stay O(1), so the sum cannot overflow.
    hermite_orthonormal_weighted_all<Scalar>(Scalar(1), Scalar(0.5), nodes[i], hf);
    Scalar sum = 0;
    for (Scalar v : hf) sum += v * v;
    rule.log_weights[i] = Scalar(0.5) * std::log(std::numbers::pi_v<Scalar>) -
                          nodes[i] * nodes[i] - std::log(sum);
    rule.weights[i] = std::exp(rule.log_weights[i]);
  }
  for (Eigen::Index i = 0; i < n / 2; ++i) {
    const Scalar lw = (rule.log_weights[i] + rule.log_weights[n - 1 - i]) / Scalar(2);
    rule.log_weights[i] = rule.log_weights[n - 1 - i] = lw;
    rule.weights[i] = rule.weights[n - 1 - i] = std::exp(lw);
  }
  return rule;
}

/// Integral of f against N(mean, variance) via x = mean + sqrt(2 variance) node.
template <std::floating_point Scalar, typename F>
Scalar integrate_gaussian(F&& f, Scalar mean, Scalar variance, const QuadratureRule<Scalar>& rule) {
  if (!(variance > 0)) throw std::invalid_argument("integrate_gaussian: variance must be positive");
  const Scalar spread = std::sqrt(Scalar(2) * variance);
  Scalar acc = 0;
  for (int i = 0; i < rule.order(); ++i) acc += rule.weights[i] * f(mean + spread * rule.nodes[i]);
  return acc / std::sqrt(std::numbers::pi_v<Scalar>);
}

/// Nodes and weights for a probability measure: int f dnu ~ sum_i w_i f(x_i).
template <std::floating_point Scalar>
struct MeasureRule {
  VectorX<Scalar> nodes;
  VectorX<Scalar> weights;

  Eigen::Index size() const { return nodes.size(); }
};

template <std::floating_point Scalar, typename F>
Scalar integrate(F&& f, const MeasureRule<Scalar>& rule) {
  Scalar acc = 0;
  for (Eigen::Index i = 0; i < rule.size(); ++i) acc += rule.weights[i] * f(rule.nodes[i]);
  return acc;
}

/// Rule for N(0, variance) that is exact on exp(-envelope x^2) * polynomial
/// up to degree 2*order-1: the nodes follow the integrand's own Gaussian.
template <std::floating_point Scalar>
MeasureRule<Scalar> envelope_rule(const QuadratureRule<Scalar>& rule, Scalar variance,
                                  Scalar envelope = Scalar(0)) {
  if (!(variance > 0)) throw std::invalid_argument("envelope_rule: variance must be positive");
  if (envelope < 0) throw std::invalid_argument("envelope_rule: envelope must be non-negative");
  const Scalar a = Scalar(1) / (Scalar(2) * variance) + envelope;
  const Scalar log_norm =
      -Scalar(0.5) * std::log(a) - Scalar(0.5) * std::log(Scalar(2) * std::numbers::pi_v<Scalar> * variance);
  MeasureRule<Scalar> out;
  out.nodes = rule.nodes / std::sqrt(a);
  out.weights.resize(rule.order());
  for (int i = 0; i < rule.order(); ++i) {
    const Scalar x = out.nodes[i];
    out.weights[i] = std::exp(rule.log_weights[i] + envelope * x * x + log_norm);
  }
  return out;
}

template <std::floating_point Scalar>
MeasureRule<Scalar> gaussian_measure_rule(const QuadratureRule<Scalar>& rule, Scalar mean, Scalar variance) {
  MeasureRule<Scalar> out = envelope_rule(rule, variance);
  out.nodes.array() += mean;
  return out;
}

/// Trapezoid rule for N(mean, variance) on mean +- half_width standard deviations.
/// Spectrally accurate for smooth integrands that are not Gaussian-enveloped
/// (e.g. sums of narrow kernel bumps).
template <std::floating_point Scalar>
MeasureRule<Scalar> trapezoid_measure_rule(Scalar mean, Scalar variance, Scalar half_width, int count) {
  if (count < 2) throw std::invalid_argument("trapezoid_measure_rule: need at least two points");
  if (!(variance > 0)) throw std::invalid_argument("trapezoid_measure_rule: variance must be positive");
  const Scalar sd = std::sqrt(variance);
  const Scalar lo = mean - half_width * sd;
  const Scalar h = Scalar(2) * half_width * sd / Scalar(count - 1);
  MeasureRule<Scalar> out;
  out.nodes.resize(count);
  out.weights.resize(count);
  const Scalar norm = Scalar(1) / (sd * std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>));
  for (int i = 0; i < count; ++i) {
    const Scalar x = lo + h * Scalar(i);
    const Scalar z = (x - mean) / sd;
    out.nodes[i] = x;
    out.weights[i] = h * norm * std::exp(-Scalar(0.5) * z * z) * ((i == 0 || i == count - 1) ? Scalar(0.5) : Scalar(1));
  }
  return out;
}

}  // namespace koopvar
