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

// Ornstein-Uhlenbeck process dX = -alpha X dt + dW: measures, exact samplers,
// Koopman spectrum, and closed-form propagation of Gaussian observables.

#pragma once

#include "koopvar/special_fn.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace koopvar {

template <std::floating_point Scalar = double>
class OuSystem {
 public:
  OuSystem(Scalar alpha, Scalar lag) : alpha_(alpha), lag_(lag) {
    if (!(alpha > 0)) throw std::invalid_argument("OuSystem: alpha must be positive");
    if (!(lag > 0)) throw std::invalid_argument("OuSystem: lag must be positive");
  }

  Scalar alpha() const { return alpha_; }
  Scalar lag() const { return lag_; }
  /// e^{-alpha t}, the conditional mean factor and first Koopman eigenvalue.
  Scalar decay() const { return std::exp(-alpha_ * lag_); }
  /// v_t^2 = 1 - e^{-2 alpha t}
  Scalar v_t_sq() const { return -std::expm1(Scalar(-2) * alpha_ * lag_); }
  Scalar c_t() const { return alpha_ / v_t_sq(); }
  Scalar transition_variance() const { return v_t_sq() / (Scalar(2) * alpha_); }
  Scalar invariant_variance() const { return Scalar(1) / (Scalar(2) * alpha_); }

  OuSystem with_lag(Scalar lag) const { return OuSystem(alpha_, lag); }

 private:
  Scalar alpha_;
  Scalar lag_;
};

/// Rule for integrals against the invariant measure mu = N(0, 1/(2 alpha)),
/// exact on exp(-envelope x^2) * polynomial.
template <std::floating_point Scalar>
MeasureRule<Scalar> invariant_rule(const OuSystem<Scalar>& sys, const QuadratureRule<Scalar>& rule,
                                   Scalar envelope = Scalar(0)) {
  return envelope_rule(rule, sys.invariant_variance(), envelope);
}

/// int exp(-envelope y^2) p(y) rho_t(x, dy). The Gaussian factor is merged into
/// the transition density so the remaining quadrature only sees p.
template <std::floating_point Scalar, typename F>
Scalar transition_integral(const OuSystem<Scalar>& sys, Scalar x, F&& p, Scalar envelope,
                           const QuadratureRule<Scalar>& rule) {
  const Scalar mean = sys.decay() * x;
  const Scalar s2 = sys.transition_variance();
  const Scalar denom = Scalar(1) + Scalar(2) * envelope * s2;
  const Scalar merged_var = s2 / denom;
  const Scalar merged_mean = mean / denom;
  const Scalar scale = std::exp(-envelope * mean * mean / denom) / std::sqrt(denom);
  return scale * integrate_gaussian(std::forward<F>(p), merged_mean, merged_var, rule);
}

enum class SamplingScheme { exact, euler_maruyama };

template <std::floating_point Scalar = double>
struct Trajectory {
  std::vector<Scalar> states;
  std::uint64_t seed = 0;
  SamplingScheme scheme = SamplingScheme::exact;
  Scalar step = 0;
};

template <std::floating_point Scalar, typename Generator>
Scalar sample_transition(const OuSystem<Scalar>& sys, Scalar x, Generator& gen) {
  std::normal_distribution<Scalar> normal(sys.decay() * x, std::sqrt(sys.transition_variance()));
  return normal(gen);
}

/// One draw from N(e^{-alpha t} x, v_t^2 / (2 alpha)).
template <std::floating_point Scalar>
Scalar sample_transition(const OuSystem<Scalar>& sys, Scalar x, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  return sample_transition(sys, x, gen);
}

template <std::floating_point Scalar>
std::vector<Scalar> sample_invariant(const OuSystem<Scalar>& sys, std::uint64_t seed, std::size_t count) {
  if (count == 0) throw std::invalid_argument("sample_invariant: count must be positive");
  std::mt19937_64 gen(seed);
  std::normal_distribution<Scalar> normal(Scalar(0), std::sqrt(sys.invariant_variance()));
  std::vector<Scalar> out(count);
  for (auto& v : out) v = normal(gen);
  return out;
}

/// Exact discretisation on the lag grid: X_0 ~ mu, X_{k+1} | X_k ~ rho_t(X_k, .).
template <std::floating_point Scalar>
Trajectory<Scalar> simulate_trajectory(const OuSystem<Scalar>& sys, std::size_t length, std::uint64_t seed) {
  if (length < 2) throw std::invalid_argument("simulate_trajectory: length must be at least 2");
  std::mt19937_64 gen(seed);
  Trajectory<Scalar> traj;
  traj.seed = seed;
  traj.scheme = SamplingScheme::exact;
  traj.step = sys.lag();
  traj.states.resize(length);
  std::normal_distribution<Scalar> stationary(Scalar(0), std::sqrt(sys.invariant_variance()));
  std::normal_distribution<Scalar> noise(Scalar(0), std::sqrt(sys.transition_variance()));
  const Scalar a = sys.decay();
  traj.states[0] = stationary(gen);
  for (std::size_t k = 1; k < length; ++k) traj.states[k] = a * traj.states[k - 1] + noise(gen);
  return traj;
}

/// Euler-Maruyama for dX = b(X) dt + s(X) dW; states has nsteps + 1 entries.
template <std::floating_point Scalar = double>
Trajectory<Scalar> euler_maruyama(const std::function<Scalar(Scalar)>& drift,
                                  const std::function<Scalar(Scalar)>& diffusion, Scalar x0, Scalar step,
                                  std::size_t nsteps, std::uint64_t seed) {
  if (!(step > 0)) throw std::invalid_argument("euler_maruyama: step must be positive");
  if (nsteps == 0) throw std::invalid_argument("euler_maruyama: nsteps must be positive");
  std::mt19937_64 gen(seed);
  std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
  Trajectory<Scalar> traj;
  traj.seed = seed;
  traj.scheme = SamplingScheme::euler_maruyama;
  traj.step = step;
  traj.states.resize(nsteps + 1);
  traj.states[0] = x0;
  const Scalar sqrt_step = std::sqrt(step);
  Scalar x = x0;
  for (std::size_t k = 0; k < nsteps; ++k) {
    x = x + drift(x) * step + diffusion(x) * sqrt_step * normal(gen);
    if (!std::isfinite(x))
      throw std::runtime_error("euler_maruyama: non-finite state at step " + std::to_string(k + 1));
    traj.states[k + 1] = x;
  }
  return traj;
}

/// q_j = e^{-alpha j t}
template <std::floating_point Scalar>
Scalar koopman_eigenvalue(const OuSystem<Scalar>& sys, int j) {
  return std::exp(-sys.alpha() * Scalar(j) * sys.lag());
}

enum class KoopmanArgument {
  sqrt_2alpha,  // H_j(sqrt(2 alpha) x), the printed formula
  sqrt_alpha,   // H_j(sqrt(alpha) x)
};

inline const char* to_string(KoopmanArgument a) {
  return a == KoopmanArgument::sqrt_2alpha ? "sqrt(2*alpha)*x" : "sqrt(alpha)*x";
}

template <std::floating_point Scalar>
struct KoopmanCandidate {
  KoopmanArgument argument;
  Scalar orthonormality_error;  // max |<psi_i, psi_j>_mu - delta_ij| after per-index normalisation
  Scalar eigenrelation_error;   // max |K^t psi_j - q_j psi_j| on a grid
  bool accepted;
};

/// Koopman eigenfunctions psi_j of the OU process, orthonormal in L^2_mu.
///
/// The constructor evaluates the Hermite-type formula with each candidate
/// argument, divides every psi_j by its quadrature-computed L^2_mu norm, and
/// keeps the first candidate whose functions are orthonormal and satisfy the
/// eigenrelation int psi_j drho_t(x, .) = q_j psi_j(x) to within `tolerance`.
template <std::floating_point Scalar = double>
class KoopmanBasis {
 public:
  KoopmanBasis(const OuSystem<Scalar>& sys, int count, int quadrature_order = kDefaultQuadratureOrder,
               Scalar tolerance = Scalar(1e-8))
      : sys_(sys), count_(count) {
    if (count < 1) throw std::invalid_argument("KoopmanBasis: count must be positive");
    detail::check_degree(count - 1);
    const int order = std::min(kMaxQuadratureOrder, std::max(quadrature_order, count + 8));
    const auto rule = gauss_hermite<Scalar>(order);
    const auto mu_rule = invariant_rule(sys, rule);

    for (KoopmanArgument arg : {KoopmanArgument::sqrt_2alpha, KoopmanArgument::sqrt_alpha}) {
      const Scalar scale = arg == KoopmanArgument::sqrt_2alpha ? std::sqrt(Scalar(2) * sys.alpha())
                                                               : std::sqrt(sys.alpha());
      MatrixX<Scalar> vals(count, mu_rule.size());
      std::vector<Scalar> buf(count);
      for (Eigen::Index q = 0; q < mu_rule.size(); ++q) {
        hermite_orthonormal_weighted_all<Scalar>(scale, Scalar(0), mu_rule.nodes[q], buf);
        for (int j = 0; j < count; ++j) vals(j, q) = buf[j];
      }
      MatrixX<Scalar> gram = vals * mu_rule.weights.asDiagonal() * vals.transpose();
      VectorX<Scalar> inv_norm = gram.diagonal().cwiseSqrt().cwiseInverse();
      gram = inv_norm.asDiagonal() * gram * inv_norm.asDiagonal();
      const Scalar orth_err = (gram - MatrixX<Scalar>::Identity(count, count)).cwiseAbs().maxCoeff();

      scale_ = scale;
      inv_norm_ = inv_norm;
      const Scalar eig_err = eigenrelation_error(rule);
      const bool ok = orth_err <= tolerance && eig_err <= tolerance;
      candidates_.push_back({arg, orth_err, eig_err, ok});
      if (ok) {
        argument_ = arg;
        // The printed prefactor is 1/sqrt(2^j alpha^j j!) on H_j; relative to the
        // orthonormal h_j = H_j/sqrt(2^j j!) that is alpha^{-j/2}.
        log_correction_.resize(count);
        for (int j = 0; j < count; ++j)
          log_correction_[j] = std::log(inv_norm[j]) + Scalar(0.5) * Scalar(j) * std::log(sys.alpha());
        return;
      }
    }
    throw std::runtime_error("KoopmanBasis: no candidate eigenfunction family passed the quadrature oracle");
  }

  int size() const { return count_; }
  const OuSystem<Scalar>& system() const { return sys_; }
  KoopmanArgument argument() const { return argument_; }
  Scalar argument_scale() const { return scale_; }
  const std::vector<KoopmanCandidate<Scalar>>& candidates() const { return candidates_; }
  /// log of the factor applied on top of the printed normalisation 1/sqrt(2^j alpha^j j!).
  const VectorX<Scalar>& log_correction() const { return log_correction_; }

  Scalar eigenvalue(int j) const { return koopman_eigenvalue(sys_, j); }

  void values(Scalar x, std::span<Scalar> out) const {
    hermite_orthonormal_weighted_all<Scalar>(scale_, Scalar(0), x, out);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] *= inv_norm_[static_cast<Eigen::Index>(j)];
  }

  Scalar operator()(int j, Scalar x) const {
    if (j < 0 || j >= count_) throw std::out_of_range("KoopmanBasis: index out of range");
    return hermite_orthonormal_weighted_eval<Scalar>(j, scale_, Scalar(0), x) * inv_norm_[j];
  }

  /// Row j holds psi_j at each point.
  MatrixX<Scalar> matrix(std::span<const Scalar> xs) const {
    MatrixX<Scalar> out(count_, static_cast<Eigen::Index>(xs.size()));
    std::vector<Scalar> buf(count_);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      values(xs[i], buf);
      for (int j = 0; j < count_; ++j) out(j, static_cast<Eigen::Index>(i)) = buf[j];
    }
    return out;
  }

 private:
  Scalar eigenrelation_error(const QuadratureRule<Scalar>& rule) const {
    Scalar err = 0;
    std::vector<Scalar> buf(count_);
    const Scalar half = Scalar(2) / std::sqrt(sys_.alpha());
    for (int g = 0; g <= 40; ++g) {
      const Scalar x = -half + Scalar(g) * half / Scalar(20);
      values(x, buf);
      for (int j = 0; j < count_; ++j) {
        const Scalar image = transition_integral(
            sys_, x,
            [&](Scalar y) { return hermite_orthonormal_weighted_eval<Scalar>(j, scale_, Scalar(0), y) * inv_norm_[j]; },
            Scalar(0), rule);
        err = std::max(err, std::abs(image - eigenvalue(j) * buf[j]));
      }
    }
    return err;
  }

  OuSystem<Scalar> sys_;
  int count_;
  KoopmanArgument argument_ = KoopmanArgument::sqrt_alpha;
  Scalar scale_ = 0;
  VectorX<Scalar> inv_norm_;
  VectorX<Scalar> log_correction_;
  std::vector<KoopmanCandidate<Scalar>> candidates_;
};

template <std::floating_point Scalar>
Scalar koopman_eigenfunction(const KoopmanBasis<Scalar>& basis, int j, Scalar x) {
  return basis(j, x);
}

/// prefactor * exp(-(x - mean)^2 / (2 variance))
template <std::floating_point Scalar = double>
struct GaussianObservable {
  Scalar mean = 0;
  Scalar variance = 1;
  Scalar prefactor = 1;

  static GaussianObservable normalized(Scalar mean, Scalar variance) {
    if (!(variance > 0)) throw std::invalid_argument("GaussianObservable: variance must be positive");
    return {mean, variance, Scalar(1) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar> * variance)};
  }

  Scalar operator()(Scalar x) const {
    const Scalar d = x - mean;
    return prefactor * std::exp(-d * d / (Scalar(2) * variance));
  }
};

enum class GaussianPropagationVariant {
  plain_vt_sq,          // sigma_t^2 = sigma_0^2 + v_t^2
  transition_variance,  // sigma_t^2 = sigma_0^2 + v_t^2 / (2 alpha)
};

inline const char* to_string(GaussianPropagationVariant v) {
  return v == GaussianPropagationVariant::plain_vt_sq ? "sigma0^2 + v_t^2" : "sigma0^2 + v_t^2/(2*alpha)";
}

/// K^t phi for a Gaussian observable: again a Gaussian in x,
/// p sigma_0/sigma_t exp(-(m_0 - e^{-alpha t} x)^2 / (2 sigma_t^2)).
/// The default variant is the one selected by resolve_gaussian_variant.
template <std::floating_point Scalar>
GaussianObservable<Scalar> propagate_gaussian(
    const OuSystem<Scalar>& sys, const GaussianObservable<Scalar>& obs,
    GaussianPropagationVariant variant = GaussianPropagationVariant::transition_variance) {
  if (!(obs.variance > 0)) throw std::invalid_argument("propagate_gaussian: variance must be positive");
  const Scalar extra = variant == GaussianPropagationVariant::plain_vt_sq ? sys.v_t_sq() : sys.transition_variance();
  const Scalar sigma_t_sq = obs.variance + extra;
  const Scalar a = sys.decay();
  return {obs.mean / a, sigma_t_sq / (a * a), obs.prefactor * std::sqrt(obs.variance / sigma_t_sq)};
}

template <std::floating_point Scalar>
struct GaussianVariantCheck {
  GaussianPropagationVariant variant;
  Scalar max_error;
  bool accepted;
};

/// Compares both closed forms with direct quadrature of phi against rho_t(x, .)
/// on a 41-point grid.
template <std::floating_point Scalar>
std::vector<GaussianVariantCheck<Scalar>> resolve_gaussian_variant(const OuSystem<Scalar>& sys,
                                                                   const GaussianObservable<Scalar>& obs,
                                                                   const QuadratureRule<Scalar>& rule,
                                                                   Scalar tolerance = Scalar(1e-8)) {
  std::vector<GaussianVariantCheck<Scalar>> out;
  for (auto v : {GaussianPropagationVariant::plain_vt_sq, GaussianPropagationVariant::transition_variance}) {
    const auto image = propagate_gaussian(sys, obs, v);
    Scalar err = 0;
    for (int g = 0; g <= 40; ++g) {
      const Scalar x = Scalar(-2) + Scalar(g) * Scalar(0.1);
      const Scalar direct = integrate_gaussian(obs, sys.decay() * x, sys.transition_variance(), rule);
      err = std::max(err, std::abs(direct - image(x)));
    }
    out.push_back({v, err, err <= tolerance});
  }
  return out;
}

/// K^t k_z^sigma = tau * k^nu_center for the RBF section k_z^sigma(x) = exp(-(x-z)^2/sigma^2).
template <std::floating_point Scalar = double>
struct KernelSectionImage {
  Scalar tau;
  Scalar nu;
  Scalar center;

  Scalar operator()(Scalar x) const {
    const Scalar d = x - center;
    return tau * std::exp(-d * d / (nu * nu));
  }
};

template <std::floating_point Scalar>
KernelSectionImage<Scalar> propagate_kernel_section(const OuSystem<Scalar>& sys, Scalar bandwidth, Scalar z) {
  if (!(bandwidth > 0)) throw std::invalid_argument("propagate_kernel_section: bandwidth must be positive");
  const Scalar cs2 = sys.c_t() * bandwidth * bandwidth;
  const Scalar tau = std::sqrt(cs2 / (Scalar(1) + cs2));
  const Scalar growth = std::exp(sys.alpha() * sys.lag());
  return {tau, growth * bandwidth / tau, growth * z};
}

}  // namespace koopvar
