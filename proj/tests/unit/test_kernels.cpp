// Copyright 2026 The bnnblocks Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include <doctest.h>

#include <memory>
#include <numbers>

#include "bnnblocks/kernels.hpp"
#include "bnnblocks/rng.hpp"

using namespace bnnblocks;

TEST_SUITE("kernels") {
  TEST_CASE("random feature map scaling") {
    const RandomFeatureBlock b(3, 6, Activation::ReLU, 7, 1.0);
    const Matrix x = CounterRng(40).normal_matrix(4, 3);
    const Matrix expect = (x * b.weights()).cwiseMax(0.0) / std::sqrt(6.0);
    CHECK((b.features(x) - expect).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(RandomFeatureBlock(4, 3, Activation::ReLU, 1).rho() == doctest::Approx(0.5));
  }

  TEST_CASE("empirical kernel equals the explicit feature sum") {
    const RandomFeatureBlock b(3, 50, Activation::Tanh, 8, 1.0);
    const Vector a = Vector::LinSpaced(3, -1.0, 1.0), c = Vector::LinSpaced(3, 0.5, 0.2);
    double explicit_sum = 0.0;
    for (Index i = 0; i < 50; ++i) explicit_sum += std::tanh(a.dot(b.weights().col(i))) * std::tanh(c.dot(b.weights().col(i)));
    CHECK(empirical_kernel(b, a, c) == doctest::Approx(explicit_sum / 50.0).epsilon(1e-12));
    const auto spec = KernelSpec::empirical(std::make_shared<RandomFeatureBlock>(b));
    CHECK(kernel_matrix(spec, Matrix(a.transpose()), Matrix(c.transpose()))(0, 0) ==
          doctest::Approx(explicit_sum / 50.0).epsilon(1e-12));
  }

  TEST_CASE("arc-cosine closed form special angles") {
    const Vector e0 = Vector::Unit(3, 0), e1 = Vector::Unit(3, 1);
    CHECK(arc_cosine_closed_form(e0, e0) == doctest::Approx(0.5));
    CHECK(arc_cosine_closed_form(e0, e1) == doctest::Approx(0.5 / std::numbers::pi));
    CHECK(arc_cosine_closed_form(e0, -e0) == doctest::Approx(0.0));
    CHECK(arc_cosine_closed_form(2.0 * e0, 3.0 * e1) == doctest::Approx(3.0 / std::numbers::pi));
    CHECK_THROWS(arc_cosine_closed_form(Vector::Zero(3), e0));
    CHECK(arc_cosine_kernel(Vector::Zero(3), e0) == 0.0);
  }

  TEST_CASE("expected kernels: closed forms against quadrature and against each other") {
    const Vector a = Vector::LinSpaced(4, 0.1, 0.6), b = Vector::LinSpaced(4, 0.5, -0.3);
    CHECK(expected_kernel(Activation::ReLU, a, b) == doctest::Approx(arc_cosine_closed_form(a, b)).epsilon(1e-12));
    CHECK(expected_kernel(Activation::Identity, a, b, 2.0) == doctest::Approx(4.0 * a.dot(b)).epsilon(1e-12));
    const double erf_closed = expected_kernel(Activation::Erf, a, b);
    // Quadrature path: tanh and sigmoid, checked against a Monte Carlo estimate.
    CounterRng r(41);
    double mc = 0.0;
    const int n = 400000;
    for (int i = 0; i < n; ++i) {
      const Vector w = r.normal_matrix(4, 1);
      mc += std::tanh(a.dot(w)) * std::tanh(b.dot(w));
    }
    CHECK(expected_kernel(Activation::Tanh, a, b) == doctest::Approx(mc / n).epsilon(0.02));
    double mc_erf = 0.0;
    CounterRng r2(42);
    for (int i = 0; i < n; ++i) {
      const Vector w = r2.normal_matrix(4, 1);
      mc_erf += std::erf(a.dot(w)) * std::erf(b.dot(w));
    }
    CHECK(erf_closed == doctest::Approx(mc_erf / n).epsilon(0.02));
  }

  TEST_CASE("Gauss-Hermite rule integrates polynomials") {
    Vector x, w;
    gauss_hermite(20, x, w);
    CHECK(w.sum() == doctest::Approx(std::sqrt(std::numbers::pi)));
    CHECK((w.array() * x.array().square()).sum() == doctest::Approx(std::sqrt(std::numbers::pi) / 2));
    CHECK((w.array() * x.array().pow(4)).sum() == doctest::Approx(3 * std::sqrt(std::numbers::pi) / 4));
  }

  TEST_CASE("inducing point features reproduce the Nystrom product") {
    CounterRng r(43);
    const Matrix z = r.normal_matrix(5, 2), x = r.normal_matrix(7, 2);
    const KernelSpec k = KernelSpec::rbf(1.3);
    const InducingPointBlock b(k, z);
    const Matrix kxz = kernel_matrix(k, x, z), kzz = kernel_matrix(k, z, z);
    const Matrix nystrom = kxz * kzz.ldlt().solve(kxz.transpose());
    const Matrix f = b.features(x);
    CHECK((f * f.transpose() - nystrom).cwiseAbs().maxCoeff() < 1e-9);
    const Vector resid = b.residual_variance(x);
    for (Index i = 0; i < 7; ++i) CHECK(resid(i) == doctest::Approx(1.0 - nystrom(i, i)).epsilon(1e-9));
    CHECK((b.features(z) - b.sqrt_factor()).cwiseAbs().maxCoeff() < 1e-9);
  }

  TEST_CASE("kernel specs") {
    CHECK(parse_kernel("rbf:2.5").lengthscale == 2.5);
    CHECK(parse_kernel("linear").kind == KernelKind::Linear);
    CHECK(parse_kernel(to_string(KernelSpec::arc_cosine())).kind == KernelKind::ArcCosine1);
    CHECK_THROWS(parse_kernel("rbf:-1"));
    CHECK_THROWS(parse_kernel("matern"));
  }

  TEST_CASE("concentration error shrinks with r") {
    ConcentrationConfig cfg;
    cfg.r_grid = {64, 1024};
    cfg.seeds = {1, 2};
    cfg.n_pairs = 10;
    const auto errors = mean_sup_error(concentration_experiment(cfg), cfg.r_grid);
    CHECK(errors[1] < errors[0]);
    CHECK(log_log_slope({10, 100}, {1.0, 0.1}) == doctest::Approx(-1.0));
    for (const auto& [a, b] : sample_pairs(10, 20, 3)) {
      CHECK(a.norm() <= 1.0);
      CHECK(std::abs(a.dot(b)) / (a.norm() * b.norm()) <= 1.0 - 1e-6);
    }
  }

  TEST_CASE("sparse-GP predictive with S = K_ZZ returns the prior") {
    CounterRng r(44);
    const Matrix z = r.normal_matrix(4, 2), f = r.normal_matrix(3, 2);
    const KernelSpec k = KernelSpec::rbf(1.0);
    const Matrix kzz = kernel_matrix(k, z, z);
    const PosteriorMoments pm = inducing_predictive(kernel_matrix(k, f, f), kernel_matrix(k, f, z), kzz, Vector::Zero(4), kzz);
    CHECK(pm.mean.cwiseAbs().maxCoeff() < 1e-12);
    CHECK((pm.cov - kernel_matrix(k, f, f)).cwiseAbs().maxCoeff() < 1e-9);
  }

  TEST_CASE("feature and inducing views agree") {
    EquivalenceConfig cfg;
    cfg.instances = 3;
    for (const auto& res : equivalence_check(cfg)) {
      CAPTURE(res.name);
      CHECK(res.max_abs_discrepancy < 1e-8);
    }
    const RandomFeatureBlock b(3, 4, Activation::ReLU, 1);
    CHECK_THROWS_AS(random_feature_equivalence(b, Matrix::Ones(2, 3), Matrix::Ones(3, 3), Vector::Zero(4),
                                               Matrix::Identity(4, 4)),
                    ShapeError);
  }
}
