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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"

using namespace koopvar;

namespace {

PairedDataset random_pairs(std::size_t m, std::uint64_t seed) { return sample_iid_pairs(OuSystem(1.0, 0.05), m, seed); }

Eigen::MatrixXd random_symmetric(int n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd A(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) A(i, j) = nd(gen);
  return (A + A.transpose()) / 2;
}

}  // namespace

TEST_CASE("sym_eig") {
  const auto id = sym_eig(Eigen::MatrixXd::Identity(6, 6));
  CHECK((id.values.array() - 1).abs().maxCoeff() <= 1e-15);

  const auto d = sym_eig(Eigen::Vector3d(3, 1, 2).asDiagonal().toDenseMatrix());
  CHECK(d.values[0] == doctest::Approx(3));
  CHECK(d.values[1] == doctest::Approx(2));
  CHECK(d.values[2] == doctest::Approx(1));
  CHECK(std::abs(d.vectors(0, 0)) == doctest::Approx(1));
  CHECK(std::abs(d.vectors(2, 1)) == doctest::Approx(1));
  CHECK(std::abs(d.vectors(1, 2)) == doctest::Approx(1));

  const Eigen::MatrixXd S = random_symmetric(50, 3);
  const auto es = sym_eig(S);
  CHECK(es.source_dim == 50);
  for (int j = 1; j < 50; ++j) CHECK(es.values[j] <= es.values[j - 1]);
  CHECK(max_residual(S, es) <= 1e-9);
  CHECK(orthonormality_error(es) <= 1e-10);
  CHECK(reconstruction_error(S, es) <= 1e-8 * S.cwiseAbs().maxCoeff());

  Eigen::MatrixXd bad = S;
  bad(0, 1) += 1e-6;
  CHECK_THROWS_AS(sym_eig(bad), std::invalid_argument);
}

TEST_CASE("Lanczos agrees with the dense solver") {
  const RbfKernel<double> k(0.1);
  const auto data = random_pairs(600, 11);
  Eigen::MatrixXd G = gram_matrix(k, std::span<const double>(data.xs)) / 600.0;
  const auto dense = sym_eig(G);
  const auto lz = lanczos_top(G, 11);
  REQUIRE(lz.size() == 11);
  for (int j = 0; j < 11; ++j) {
    CHECK(std::abs(lz.values[j] - dense.values[j]) <= 1e-12 * dense.values[0]);
    CHECK(std::abs(std::abs(lz.vectors.col(j).dot(dense.vectors.col(j))) - 1) <= 1e-9);
  }
  CHECK(orthonormality_error(lz) <= 1e-10);
  CHECK(max_residual(G, lz) <= 1e-12);

  const auto id = lanczos_top(Eigen::MatrixXd::Identity(40, 40), 3);
  CHECK((id.values.array() - 1).abs().maxCoeff() <= 1e-14);
  CHECK(orthonormality_error(id) <= 1e-12);

  const auto top = top_eigenpairs(G, 4, 100);
  CHECK((top.values - dense.values.head(4)).cwiseAbs().maxCoeff() <= 1e-12 * dense.values[0]);
}

TEST_CASE("single-point features") {
  PairedDataset one;
  one.xs = {0.4};
  one.ys = {0.3};
  const RbfKernel<double> k(0.5);
  const auto f = empirical_features(one, k, 1);
  CHECK(f.eigenvalue(0) == doctest::Approx(1.0).epsilon(1e-15));
  const std::vector<double> xs{-1.0, 0.0, 0.4, 1.3};
  const Eigen::MatrixXd e = evaluate_features(f, xs);
  for (int i = 0; i < 4; ++i) CHECK(e(i, 0) == doctest::Approx(k(0.4, xs[i])).epsilon(1e-14));
  CHECK_THROWS_AS(empirical_features(one, k, 2), std::invalid_argument);
}

TEST_CASE("whitening and RKHS normalisation") {
  for (double sigma : {0.1, 0.5}) {
    const RbfKernel<double> k(sigma);
    for (std::size_t m : {10u, 100u, 1000u, 2000u}) {
      const int N = m == 10 ? 5 : 10;
      const auto data = random_pairs(m, 100 + m);
      const auto f = empirical_features(data, k, N);
      const Eigen::VectorXd w = whitening_values(f);
      const Eigen::VectorXd r = feature_rkhs_norms_sq(f);
      CAPTURE(sigma);
      CAPTURE(m);
      CHECK((w.array() - 1).abs().maxCoeff() <= 1e-8);
      CHECK(((r.array() * f.eigensystem.values.head(N).array()) - 1).abs().maxCoeff() <= 1e-8);
      for (int j = 1; j < N; ++j) CHECK(f.eigenvalue(j) <= f.eigenvalue(j - 1));
    }
  }
}

TEST_CASE("feature extraction guards") {
  const auto data = random_pairs(50, 5);
  CHECK_THROWS_AS(empirical_features(data, RbfKernel<double>(0.5), 50), std::runtime_error);

  PairedDataset far;
  far.xs = {-3.0, 3.0};
  far.ys = {0.0, 0.0};
  const auto f = empirical_features(far, RbfKernel<double>(0.1), 1);
  REQUIRE(f.warnings.size() == 1);
  CHECK(f.warnings[0].find("near-tied") != std::string::npos);

  EmpiricalFeatureOptions opt;
  opt.max_feature_points = 300;
  const auto big = random_pairs(900, 8);
  const RbfKernel<double> k(0.5);
  const auto sub = empirical_features(big, k, 5, opt);
  CHECK(sub.subsampled());
  CHECK(sub.data_xs.size() == 300);
  CHECK(sub.total_points == 900);
  CHECK_FALSE(sub.warnings.empty());
  // inner products run over all pairs
  const auto obs = [](double y) { return std::cos(y); };
  const auto ex = prediction_expansion(sub, big, obs);
  const Eigen::MatrixXd E = evaluate_features(sub, big.xs);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(5);
  for (std::size_t i = 0; i < 900; ++i) a += obs(big.ys[i]) * E.row(static_cast<Eigen::Index>(i)).transpose() / 900.0;
  CHECK((ex.weights - sub.coefficients * a).cwiseAbs().maxCoeff() <= 1e-12 * ex.weights.cwiseAbs().maxCoeff());
}

TEST_CASE("constant dataset is rank one") {
  PairedDataset c;
  c.xs.assign(20, 0.3);
  c.ys.assign(20, -0.2);
  const RbfKernel<double> k(0.5);
  const auto f = empirical_features(c, k, 1);
  CHECK(f.eigenvalue(0) == doctest::Approx(1.0).epsilon(1e-13));
  const auto obs = [](double y) { return 2 + y; };
  const std::vector<double> xs{-1.0, 0.3, 0.9};
  const auto p = predict(f, c, obs, xs);
  for (int i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(1.8 * k(0.3, xs[i])).epsilon(1e-12));
}

TEST_CASE("full-rank predictor equals the pseudo-inverse estimator") {
  // narrow kernel: the Gram matrix is well conditioned, so both assemblies are accurate
  const RbfKernel<double> k(0.01);
  const auto obs = [](double y) { return std::exp(-y * y) + 0.3 * y; };
  for (std::size_t m : {5u, 20u, 50u}) {
    const auto data = random_pairs(m, 40 + m);
    const auto f = empirical_features(data, k, static_cast<int>(m));
    const Eigen::VectorXd w = prediction_expansion(f, data, obs).weights;
    const Eigen::VectorXd ref = pseudo_inverse_prediction_weights(data, k, obs);
    CAPTURE(m);
    CHECK((w - ref).cwiseAbs().maxCoeff() <= 1e-8 * ref.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("identity lag reproduces an empirical feature") {
  auto data = random_pairs(1000, 77);
  data.ys = data.xs;
  const RbfKernel<double> k(0.5);
  const auto f = empirical_features(data, k, 10);
  const KernelExpansion e1{f.data_xs, f.coefficients.col(0), k};
  const auto p = predict(f, data, e1, data.xs);
  const auto ref = e1(std::span<const double>(data.xs));
  double err = 0, scale = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    err = std::max(err, std::abs(p[i] - ref[i]));
    scale = std::max(scale, std::abs(ref[i]));
  }
  CHECK(err <= 1e-2 * scale);
}

TEST_CASE("prediction is invariant under joint permutation") {
  const auto data = random_pairs(300, 12);
  const RbfKernel<double> k(0.1);
  PairedDataset perm = data;
  std::vector<std::size_t> idx(300);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), std::mt19937_64(4));
  for (std::size_t i = 0; i < 300; ++i) {
    perm.xs[i] = data.xs[idx[i]];
    perm.ys[i] = data.ys[idx[i]];
  }
  const auto obs = [](double y) { return std::sin(3 * y); };
  std::vector<double> xs;
  for (int i = 0; i <= 40; ++i) xs.push_back(-2 + 0.1 * i);
  const auto a = predict(empirical_features(data, k, 10), data, obs, xs);
  const auto b = predict(empirical_features(perm, k, 10), perm, obs, xs);
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-10);
}

TEST_CASE("empirical spectrum approaches the Mercer spectrum") {
  const double sigma = 0.5;
  const std::size_t m = 10000;
  const auto data = random_pairs(m, 2024);
  const auto f = empirical_features(data, RbfKernel<double>(sigma), 5);
  // ||C_hat - C||_HS from the Mercer series (60 terms)
  const MercerBasis basis(1.0, sigma, 60);
  const Eigen::MatrixXd P = basis.feature_matrix(data.xs);
  const Eigen::MatrixXd D = P * P.transpose() / double(m) - Eigen::MatrixXd::Identity(60, 60);
  const Eigen::VectorXd lam = basis.eigenvalues();
  const double hs = std::sqrt((lam * lam.transpose()).cwiseProduct(D.cwiseAbs2()).sum());
  for (int j = 0; j < 5; ++j) CHECK(std::abs(f.eigenvalue(j) - lam[j]) <= 3 * hs);
}

TEST_CASE("analytic truncated prediction") {
  const OuSystem sys(1.0, 0.05);
  const MercerBasis basis(1.0, 0.5, 40);
  const auto phi0 = mercer_observable(basis);
  for (double x : {-1.0, 0.0, 0.7}) CHECK(phi0(x) == doctest::Approx(basis(0, x)).epsilon(1e-13));

  // coefficients against a fine trapezoid rule
  const auto Ktphi = propagate_gaussian(sys, phi0);
  const auto trap = trapezoid_measure_rule(0.0, sys.invariant_variance(), 12.0, 6001);
  const auto tp = analytic_truncated_prediction(basis, sys, phi0, 12);
  for (int j = 0; j < 12; ++j) {
    const double ref = integrate([&](double x) { return Ktphi(x) * basis(j, x); }, trap);
    CHECK(std::abs(tp.coeffs[j] - ref) <= 1e-12);
  }

  // residual decreases in N and respects sqrt(lambda_{N+1}) e^{alpha t/2} ||phi||_H
  const auto rule = prediction_error_rule(sys, 0.5);
  const double phi_norm = 1 / std::sqrt(basis.eigenvalue(0));
  double prev = 1e300;
  for (int N = 1; N <= 20; ++N) {
    const auto tn = analytic_truncated_prediction(basis, sys, phi0, N);
    const double r = l2mu_error(Ktphi, tn, rule);
    // phi_0 is even, so odd-indexed coefficients vanish
    if (N % 2) CHECK(r < prev);
    else CHECK(r <= prev + 1e-12);
    CHECK(r <= std::sqrt(basis.eigenvalue(N)) * std::exp(0.025) * phi_norm);
    prev = r;
  }

  const OuSystem tiny(1.0, 1e-10);
  const auto t0 = analytic_truncated_prediction(basis, tiny, phi0, 20);
  CHECK(std::abs(t0.coeffs[0] - 1) <= 1e-8);
  CHECK(t0.coeffs.tail(19).cwiseAbs().maxCoeff() <= 1e-8);

  const GaussianObservable<double> shifted{0.4, 0.3, 1.2};
  const auto ts = analytic_truncated_prediction(basis, sys, shifted, 10);
  const auto Kts = propagate_gaussian(sys, shifted);
  for (int j = 0; j < 10; ++j) {
    const double ref = integrate([&](double x) { return Kts(x) * basis(j, x); }, trap);
    CHECK(std::abs(ts.coeffs[j] - ref) <= 1e-12);
  }
}

TEST_CASE("l2mu_error") {
  const OuSystem sys(1.0, 0.05);
  const auto rule = invariant_rule(sys, gauss_hermite<double>(128));
  const auto f = [](double x) { return std::sin(x); };
  CHECK(l2mu_error(f, f, rule) == 0);
  const KoopmanBasis koop(sys, 4);
  const auto g = [&](double x) { return std::sin(x) - koop(1, x); };
  CHECK(l2mu_error(f, g, rule) == doctest::Approx(1.0).epsilon(1e-8));

  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int r = 0; r < 50; ++r) {
    const double a = u(gen), b = u(gen), c = u(gen);
    const auto fa = [a](double x) { return std::cos(a * x); };
    const auto fb = [b](double x) { return b * x * x; };
    const auto fc = [c](double x) { return std::exp(c * x / 4); };
    CHECK(l2mu_error(fa, fc, rule) <= l2mu_error(fa, fb, rule) + l2mu_error(fb, fc, rule) + 1e-12);
  }
}
