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
// Feature maps placed in front of a function block: random feature blocks
// (fixed random projection + activation) and inducing point blocks
// (x -> K(x, Z) K(Z, Z)^{-1/2}).

#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "bnnblocks/autodiff.hpp"
#include "bnnblocks/core.hpp"

namespace bnnblocks {

class RandomFeatureBlock {
 public:
  RandomFeatureBlock() = default;
  /// Draws W (d_in x r, column j is w_j) from rho * N(0, I) using `seed`.
  /// rho <= 0 selects 1/sqrt(d_in). With `random_bias`, adds b ~ N(0, 1) inside σ.
  RandomFeatureBlock(Index d_in, Index r, Activation sigma, std::uint64_t seed, double rho = 0.0,
                     bool random_bias = false);
  /// Wraps explicit weights (used when loading a saved network).
  RandomFeatureBlock(Matrix w, Vector bias, Activation sigma, std::uint64_t seed, double rho);

  Index input_dim() const { return w_.rows(); }
  Index feature_count() const { return w_.cols(); }
  Activation activation() const { return sigma_; }
  double rho() const { return rho_; }
  std::uint64_t seed() const { return seed_; }
  const Matrix& weights() const { return w_; }
  /// Empty unless built with a random bias.
  const Vector& bias() const { return bias_; }

  /// Row i is σ(W^T x_i + b) / sqrt(r).
  Matrix features(const Matrix& x) const;
  Var features(const Var& x) const;

 private:
  Matrix w_;
  Vector bias_;
  Activation sigma_ = Activation::ReLU;
  double rho_ = 1.0;
  std::uint64_t seed_ = 0;
};

enum class KernelKind { ArcCosine1, RBF, Linear, EmpiricalRF };

struct KernelSpec {
  KernelKind kind = KernelKind::RBF;
  double lengthscale = 1.0;
  std::shared_ptr<const RandomFeatureBlock> block;  // EmpiricalRF only

  static KernelSpec arc_cosine() { return {KernelKind::ArcCosine1, 1.0, nullptr}; }
  static KernelSpec rbf(double lengthscale) { return {KernelKind::RBF, lengthscale, nullptr}; }
  static KernelSpec linear() { return {KernelKind::Linear, 1.0, nullptr}; }
  static KernelSpec empirical(std::shared_ptr<const RandomFeatureBlock> b) {
    return {KernelKind::EmpiricalRF, 1.0, std::move(b)};
  }
};

std::string to_string(const KernelSpec& k);
/// Parses "rbf:<lengthscale>", "linear", "arccos". EmpiricalRF has no text form.
KernelSpec parse_kernel(std::string_view text);

/// (|a||b| / 2π)(sin θ + (π - θ) cos θ); zero when either input is zero.
double arc_cosine_kernel(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);

/// Gram matrix K(A, B) over the rows of A and B.
Matrix kernel_matrix(const KernelSpec& k, const Matrix& a, const Matrix& b);
/// K(A, B) with A on the tape and B constant.
Var kernel_matrix(const KernelSpec& k, const Var& a, const Matrix& b);

class InducingPointBlock {
 public:
  InducingPointBlock() = default;
  /// Factors K(Z, Z) with jitter escalation; throws FactorizationError when singular.
  InducingPointBlock(KernelSpec kernel, Matrix z, double jitter = 0.0);

  const KernelSpec& kernel() const { return kernel_; }
  const Matrix& inducing_points() const { return z_; }
  Index input_dim() const { return z_.cols(); }
  Index feature_count() const { return z_.rows(); }
  /// Lower Cholesky factor L of K(Z, Z) (+ jitter); features(Z) = L.
  const Matrix& sqrt_factor() const { return lower_; }
  double jitter() const { return jitter_; }

  /// Row i is K(x_i, Z) K(Z, Z)^{-1/2} with K^{1/2} = L, i.e. K(x_i, Z) L^{-T}.
  Matrix features(const Matrix& x) const;
  Var features(const Var& x) const;
  /// diag(K(X, X) - K(X, Z) K(Z, Z)^{-1} K(Z, X)), clamped at 0.
  Vector residual_variance(const Matrix& x) const;
  Var residual_variance(const Var& x) const;

 private:
  KernelSpec kernel_;
  Matrix z_;
  Matrix lower_;
  Matrix basis_;  // L^{-T}
  double jitter_ = 0.0;
};

inline Matrix ipb_features(const InducingPointBlock& block, const Matrix& x) { return block.features(x); }

}  // namespace bnnblocks
