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

// Probabilistic radii for the estimation error and deterministic bounds for
// the prediction error of the truncated empirical Koopman operator.

#pragma once

#include "koopvar/covariance.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace koopvar {

enum class VarianceSource { exact_sigma_m, iid_e0, hoeffding };

struct ConfidenceQuery {
  long long m = 1;
  double delta = 0.1;
  VarianceSource variance_source = VarianceSource::exact_sigma_m;
};

namespace detail {

inline void check_query(const ConfidenceQuery& q) {
  if (!(q.delta > 0 && q.delta < 1)) throw std::invalid_argument("confidence: delta must lie in (0, 1)");
  if (q.m < 1) throw std::invalid_argument("confidence: m must be positive");
}

}  // namespace detail

/// Smallest eps with sigma_sq / (m eps^2) <= delta.
inline double chebyshev_radius(double sigma_sq, const ConfidenceQuery& q) {
  detail::check_query(q);
  if (!(sigma_sq >= 0)) throw std::invalid_argument("chebyshev_radius: variance must be non-negative");
  return std::sqrt(sigma_sq / (static_cast<double>(q.m) * q.delta));
}

/// Smallest eps with 2 exp(-m eps^2 / (8 ||k||_inf^2)) <= delta (i.i.d. pairs only).
inline double hoeffding_radius(double kernel_sup, const ConfidenceQuery& q) {
  detail::check_query(q);
  if (!(kernel_sup > 0)) throw std::invalid_argument("hoeffding_radius: kernel sup must be positive");
  return std::sqrt(8 * kernel_sup * kernel_sup * std::log(2 / q.delta) / static_cast<double>(q.m));
}

/// delta* where both radii coincide; Hoeffding is tighter for delta < delta*.
/// The crossover does not depend on m. Empty if Hoeffding is tighter on all of (0, 1).
inline std::optional<double> hoeffding_crossover_delta(double sigma_sq, double kernel_sup) {
  if (!(sigma_sq > 0) || !(kernel_sup > 0)) throw std::invalid_argument("hoeffding_crossover_delta: need positive inputs");
  const double c = 8 * kernel_sup * kernel_sup;
  const auto g = [&](double delta) { return sigma_sq / delta - c * std::log(2 / delta); };
  double hi = 1.0;
  if (g(hi) >= 0) return std::nullopt;
  double lo = 0.5;
  while (g(lo) < 0) lo /= 2;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = (lo + hi) / 2;
    (g(mid) < 0 ? hi : lo) = mid;
  }
  return (lo + hi) / 2;
}

struct CoarseSigmaBounds {
  double simple;   // e0 (1 + F_m(q1))
  double squared;  // 8 e0 / (1 - q1)^2
  double remark;   // e0 (3 - q1) / (1 - q1)
};

/// Variance bounds for a self-adjoint Koopman operator with second eigenvalue q1.
inline CoarseSigmaBounds coarse_sigma_bounds(double e0, double q1, long long m) {
  if (!(q1 >= 0 && q1 < 1)) throw std::invalid_argument("coarse_sigma_bounds: q1 must lie in [0, 1)");
  if (m < 1) throw std::invalid_argument("coarse_sigma_bounds: m must be positive");
  const double gap = 1 - q1;
  return {e0 * (1 + f_m(q1, m)), 8 * e0 / (gap * gap), e0 * (3 - q1) / gap};
}

/// ceil(max(N, 2 sigma_sq / (eps^2 delta))).
inline long long min_samples(double sigma_sq, double epsilon, double delta, int N) {
  if (!(epsilon > 0) || !(delta > 0)) throw std::invalid_argument("min_samples: epsilon and delta must be positive");
  if (N < 1) throw std::invalid_argument("min_samples: N must be positive");
  const double needed = 2 * sigma_sq / (epsilon * epsilon * delta);
  // Guard the ceiling against round-off in the quotient.
  const double m = std::ceil(needed * (1 - 1e-12));
  if (m > static_cast<double>(std::numeric_limits<long long>::max() / 2))
    throw std::overflow_error("min_samples: sample size out of range");
  return std::max<long long>(N, static_cast<long long>(m));
}

/// Fixed point m = min_samples(sigma_m^2(m), ...) for an m-dependent variance.
inline long long min_samples(const std::function<double(long long)>& sigma_sq_of_m, double epsilon, double delta,
                             int N, int max_iterations = 100, double rel_tol = 1e-9) {
  long long m = N;
  for (int it = 0; it < max_iterations; ++it) {
    const long long next = min_samples(sigma_sq_of_m(m), epsilon, delta, N);
    if (next == m || std::abs(double(next - m)) <= rel_tol * double(m)) return std::max(next, m);
    m = next;
  }
  const long long next = min_samples(sigma_sq_of_m(m), epsilon, delta, N);
  throw std::runtime_error("min_samples: fixed point did not converge; last iterates " + std::to_string(m) + " and " +
                           std::to_string(next));
}

/// Inputs of the prediction bound; eigenvalues are 1-based as in lambda_1 >= lambda_2 >= ...
struct PredictionBoundInputs {
  int N = 1;
  double lambda_N = 1;
  double lambda_N1 = 0;
  double delta_N = 0.5;
  double epsilon = 0;
  double phi_l1_norm = 1;
  double koopman_rkhs_norm = 1;
};

/// ||K^t||_{H -> H} <= e^{alpha t / 2} for the Gaussian RBF space under OU dynamics.
inline double koopman_rkhs_norm_bound(const OuSystem<double>& sys) { return std::exp(sys.alpha() * sys.lag() / 2); }

/// 1/sqrt(lambda_N) + ((N + 1)/(delta_N lambda_N)) (1 + ||phi||_1) ||phi||_1^{1/2}
inline double prediction_bound_constant(const PredictionBoundInputs& in) {
  if (in.N < 1) throw std::invalid_argument("prediction_bound: N must be positive");
  if (!(in.lambda_N > 0) || !(in.delta_N > 0)) throw std::invalid_argument("prediction_bound: lambda_N and delta_N must be positive");
  return 1 / std::sqrt(in.lambda_N) +
         (in.N + 1) / (in.delta_N * in.lambda_N) * (1 + in.phi_l1_norm) * std::sqrt(in.phi_l1_norm);
}

/// Constant times eps, without checking eps < delta_N. Only for reporting the
/// bracket outside the range where it is a proven bound.
inline double prediction_bound_unchecked(const PredictionBoundInputs& in) {
  if (!(in.epsilon >= 0)) throw std::invalid_argument("prediction_bound: epsilon must be non-negative");
  return prediction_bound_constant(in) * in.epsilon;
}

inline double prediction_bound(const PredictionBoundInputs& in) {
  if (!(in.lambda_N1 < in.lambda_N)) throw std::invalid_argument("prediction_bound: need lambda_{N+1} < lambda_N");
  if (!(in.epsilon < in.delta_N))
    throw std::domain_error("prediction_bound: epsilon = " + std::to_string(in.epsilon) +
                            " is not below the spectral gap delta_N = " + std::to_string(in.delta_N));
  return prediction_bound_unchecked(in);
}

/// sqrt(lambda_{N+1}) ||K^t_H|| + prediction_bound.
inline double full_bound(const PredictionBoundInputs& in) {
  return std::sqrt(in.lambda_N1) * in.koopman_rkhs_norm + prediction_bound(in);
}

/// min_{j=1..N} (lambda_j - lambda_{j+1}) / 2 over a descending sequence (index 0 holds lambda_1).
template <typename Derived>
double spectral_gap(const Eigen::DenseBase<Derived>& eigenvalues, int N) {
  if (N < 1) throw std::invalid_argument("spectral_gap: N must be positive");
  if (eigenvalues.size() < N + 1)
    throw std::invalid_argument("spectral_gap: need at least N + 1 eigenvalues");
  double gap = std::numeric_limits<double>::infinity();
  for (int j = 0; j < N; ++j) {
    const double a = eigenvalues[j], b = eigenvalues[j + 1];
    if (a - b <= 1e-14 * std::abs(a))
      throw std::domain_error("spectral_gap: eigenvalues " + std::to_string(j + 1) + " and " + std::to_string(j + 2) +
                              " are tied or not descending");
    gap = std::min(gap, (a - b) / 2);
  }
  return gap;
}

/// Bound inputs for the analytic Mercer spectrum with N retained features.
inline PredictionBoundInputs prediction_inputs(const MercerBasis<double>& basis, int N, double epsilon,
                                               const OuSystem<double>& sys) {
  if (basis.size() < N + 1) throw std::invalid_argument("prediction_inputs: basis needs N + 1 eigenvalues");
  const Eigen::VectorXd lam = basis.eigenvalues();
  PredictionBoundInputs in;
  in.N = N;
  in.lambda_N = lam[N - 1];
  in.lambda_N1 = lam[N];
  in.delta_N = spectral_gap(lam, N);
  in.epsilon = epsilon;
  in.phi_l1_norm = 1;
  in.koopman_rkhs_norm = koopman_rkhs_norm_bound(sys);
  return in;
}

}  // namespace koopvar
