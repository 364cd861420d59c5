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

#include "koopvar/bounds.hpp"

#include <cmath>

#include "doctest.h"

using namespace koopvar;

TEST_CASE("Chebyshev radius") {
  CHECK(chebyshev_radius(0.5, {1000, 0.1}) == doctest::Approx(0.0707106781186548).epsilon(1e-13));
  CHECK(chebyshev_radius(0.5, {4000, 0.1}) == doctest::Approx(chebyshev_radius(0.5, {1000, 0.1}) / 2).epsilon(1e-14));
  CHECK(chebyshev_radius(0.3, {1000, 0.1, VarianceSource::iid_e0}) < chebyshev_radius(0.5, {1000, 0.1}));
  CHECK(chebyshev_radius(0.5, {1001, 0.1}) < chebyshev_radius(0.5, {1000, 0.1}));
  CHECK(chebyshev_radius(0.5, {1000, 0.11}) < chebyshev_radius(0.5, {1000, 0.1}));
  CHECK_THROWS_AS(chebyshev_radius(0.5, {1000, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(chebyshev_radius(0.5, {1000, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(chebyshev_radius(-0.5, {1000, 0.1}), std::invalid_argument);
}

TEST_CASE("Hoeffding radius") {
  const ConfidenceQuery q{1000, 0.1, VarianceSource::hoeffding};
  CHECK(hoeffding_radius(1.0, q) == doctest::Approx(std::sqrt(8 * std::log(20.0) / 1000)).epsilon(1e-14));
  CHECK(hoeffding_radius(1.0, q) == doctest::Approx(0.15482).epsilon(1e-4));
  CHECK(hoeffding_radius(2.5, q) == doctest::Approx(2.5 * hoeffding_radius(1.0, q)).epsilon(1e-14));
  CHECK(hoeffding_radius(1.0, {1001, 0.1}) < hoeffding_radius(1.0, q));
  CHECK(hoeffding_radius(1.0, {1000, 0.2}) < hoeffding_radius(1.0, q));
  CHECK_THROWS_AS(hoeffding_radius(1.0, {1000, 1.5}), std::invalid_argument);

  const auto cross = hoeffding_crossover_delta(0.5, 1.0);
  REQUIRE(cross.has_value());
  const ConfidenceQuery at{1000, *cross};
  CHECK(chebyshev_radius(0.5, at) == doctest::Approx(hoeffding_radius(1.0, at)).epsilon(1e-9));
  const ConfidenceQuery below{1000, *cross / 2}, above{1000, std::min(0.99, *cross * 2)};
  CHECK(hoeffding_radius(1.0, below) < chebyshev_radius(0.5, below));
  CHECK(hoeffding_radius(1.0, above) > chebyshev_radius(0.5, above));
  CHECK_FALSE(hoeffding_crossover_delta(100.0, 1.0).has_value());
}

TEST_CASE("coarse variance bounds") {
  const double q1 = std::exp(-0.05);
  CHECK(coarse_sigma_bounds(0.4, q1, 1).simple == doctest::Approx(0.4));
  const auto inf = coarse_sigma_bounds(0.4, q1, 100000000);
  CHECK(inf.simple == doctest::Approx(inf.remark).epsilon(1e-6));
  CHECK(inf.remark == doctest::Approx(0.4 * (1 + 2 / (1 - q1))).epsilon(1e-14));
  CHECK_THROWS_AS(coarse_sigma_bounds(0.4, 1.0, 5), std::invalid_argument);

  const OuSystem sys(1.0, 0.05);
  for (double sigma : {0.05, 0.1, 0.5}) {
    const MercerBasis basis(1.0, sigma, sigma == 0.05 ? 20 : 10);
    const auto cov = analytic_covariance(basis, sys);
    for (long long m : {1LL, 2LL, 20LL, 100LL, 1000LL, 10000LL, 50000LL, 1000000LL}) {
      const auto v = sigma_m_sq(cov, m);
      const auto b = coarse_sigma_bounds(cov.e0, cov.q[0], m);
      const double slack = 1e-12;
      CHECK(cov.e0 <= v.sigma_m_sq + slack);
      CHECK(v.sigma_m_sq <= b.simple + slack);
      CHECK(b.simple <= b.squared + slack);
      CHECK(b.simple <= b.remark + slack);
      CHECK(v.sigma_m_sq <= b.remark + slack);
    }
  }
}

TEST_CASE("min_samples") {
  CHECK(min_samples(0.5, 0.1, 0.1, 10) == 1000);
  CHECK(min_samples(0.5, 10.0, 0.1, 10) == 10);
  CHECK_THROWS_AS(min_samples(0.5, 0.0, 0.1, 10), std::invalid_argument);

  const OuSystem sys(1.0, 0.05);
  const MercerBasis basis(1.0, 0.1, 10);
  const auto cov = analytic_covariance(basis, sys);
  const auto sigma = [&](long long m) { return sigma_m_sq(cov, m).sigma_m_sq; };
  const long long m = min_samples(sigma, 0.05, 0.1, 10);
  CHECK(m == min_samples(sigma(m), 0.05, 0.1, 10));
  CHECK(m >= min_samples(cov.e0, 0.05, 0.1, 10));
  CHECK(m <= min_samples(sigma_m_sq(cov, 100000000).sigma_inf_sq, 0.05, 0.1, 10));
  CHECK_THROWS_AS(min_samples([](long long m) { return 2e-3 * double(m); }, 0.1, 0.1, 1, 5), std::runtime_error);
}

TEST_CASE("prediction bound") {
  PredictionBoundInputs in;
  in.N = 1;
  in.lambda_N = 1;
  in.lambda_N1 = 0.5;
  in.delta_N = 0.5;
  in.epsilon = 0.1;
  CHECK(prediction_bound(in) == doctest::Approx(0.9).epsilon(1e-14));
  auto tight = in;
  tight.delta_N = 1e-3;
  tight.epsilon = 1e-4;
  auto tighter = tight;
  tighter.delta_N = 1e-6;
  tighter.epsilon = 1e-7;
  CHECK(prediction_bound_constant(tighter) > 100 * prediction_bound_constant(tight));
  auto violated = in;
  violated.epsilon = 0.5;
  CHECK_THROWS_AS(prediction_bound(violated), std::domain_error);
  CHECK(prediction_bound_unchecked(violated) == doctest::Approx(4.5));

  const OuSystem sys(1.0, 0.05);
  const MercerBasis basis(1.0, 0.5, 30);
  double prev_eps = 0;
  for (double eps : {1e-9, 1e-8, 1e-7}) {
    const double b = prediction_bound(prediction_inputs(basis, 5, eps, sys));
    CHECK(b > prev_eps);
    prev_eps = b;
  }
  double prev_n = 0;
  for (int N = 1; N <= 20; ++N) {
    const double b = prediction_bound(prediction_inputs(basis, N, 1e-12, sys));
    CHECK(b > prev_n);
    prev_n = b;
  }
}

TEST_CASE("full bound") {
  const OuSystem sys(1.0, 0.05);
  const MercerBasis basis(1.0, 0.5, 30);
  auto in = prediction_inputs(basis, 10, 0.0, sys);
  CHECK(full_bound(in) == doctest::Approx(std::sqrt(basis.eigenvalue(10)) * std::exp(0.025)).epsilon(1e-14));
  CHECK(in.koopman_rkhs_norm == doctest::Approx(std::exp(0.025)));
  double prev = 1e300;
  for (int N = 1; N <= 20; ++N) {
    const double b = full_bound(prediction_inputs(basis, N, 1e-20, sys));
    CHECK(b < prev);
    prev = b;
  }
}

TEST_CASE("spectral gap") {
  const double r = 0.7;
  Eigen::VectorXd geo(12);
  for (int j = 0; j < 12; ++j) geo[j] = std::pow(r, j + 1);
  for (int N = 1; N <= 10; ++N)
    CHECK(spectral_gap(geo, N) == doctest::Approx((std::pow(r, N) - std::pow(r, N + 1)) / 2).epsilon(1e-14));
  CHECK(spectral_gap(Eigen::Vector3d(1.0, 0.5, 0.2), 1) == 0.25);
  CHECK_THROWS_AS(spectral_gap(Eigen::Vector3d(1.0, 1.0, 0.2), 2), std::domain_error);
  CHECK_THROWS_AS(spectral_gap(Eigen::Vector3d(1.0, 0.5, 0.2), 3), std::invalid_argument);

  const MercerBasis basis(1.0, 0.5, 11);
  const Eigen::VectorXd lam = basis.eigenvalues();
  double scan = 1e300;
  for (int j = 0; j < 10; ++j) scan = std::min(scan, (lam[j] - lam[j + 1]) / 2);
  CHECK(std::abs(spectral_gap(lam, 10) - scan) <= 1e-14);
  for (double sigma : {0.05, 0.1, 0.5}) {
    const MercerBasis b(1.0, sigma, 256);
    const Eigen::VectorXd l = b.eigenvalues();
    for (int N = 1; N < 256; N += 17) CHECK(spectral_gap(l, N) > 0);
    CHECK(spectral_gap(l, 255) > 0);
  }
}
