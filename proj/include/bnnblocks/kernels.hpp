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
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnnblocks/features.hpp"

namespace bnnblocks {

/// (1/r) Σ_i σ(aᵀw_i) σ(bᵀw_i) = <φ(a), φ(b)> for the block's features.
double empirical_kernel(const RandomFeatureBlock& block, const Vector& a, const Vector& b);

/// Closed-form first-order arc-cosine kernel E_w[ReLU(aᵀw) ReLU(bᵀw)], w ~ N(0, I).
/// Throws on zero-norm input.
double arc_cosine_closed_form(const Vector& a, const Vector& b);

/// E_w[σ(aᵀw) σ(bᵀw)] for w ~ rho N(0, I). Closed forms for identity, ReLU
/// and erf; two-dimensional Gauss-Hermite quadrature otherwise.
double expected_kernel(Activation sigma, const Vector& a, const Vector& b, double rho = 1.0);

/// Nodes and weights of the n-point Gauss-Hermite rule (weight exp(-x^2)).
void gauss_hermite(int n, Vector& nodes, Vector& weights);

struct ConcentrationConfig {
  Activation sigma = Activation::ReLU;
  Index d = 10;
  std::vector<Index> r_grid = {64, 256, 1024, 4096, 16384};
  Index n_pairs = 50;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  /// Random feature scale; <= 0 selects the block default 1/sqrt(d).
  double rho = 1.0;
  /// Seed for drawing the evaluation pairs.
  std::uint64_t pair_seed = 12345;
};

struct ConcentrationRow {
  Index r = 0;
  std::uint64_t seed = 0;
  double sup_error = 0.0;
};

/// Pairs drawn uniformly in the unit ball with |cos θ| <= 1 - 1e-6.
std::vector<std::pair<Vector, Vector>> sample_pairs(Index d, Index n_pairs, std::uint64_t seed);

/// For every (r, seed): max over pairs of |K̂ - K| with K from expected_kernel.
std::vector<ConcentrationRow> concentration_experiment(const ConcentrationConfig& cfg);
/// Same, against caller-supplied reference values (one per pair).
std::vector<ConcentrationRow> concentration_experiment(const ConcentrationConfig& cfg,
                                                       const std::vector<std::pair<Vector, Vector>>& pairs,
                                                       const std::vector<double>& reference);

/// Mean sup-error per r, in grid order.
std::vector<double> mean_sup_error(const std::vector<ConcentrationRow>& rows, const std::vector<Index>& r_grid);
/// Least-squares slope of log(error) against log(r).
double log_log_slope(const std::vector<Index>& r_grid, const std::vector<double>& errors);

std::string concentration_csv(const std::vector<ConcentrationRow>& rows);

// ---------------------------------------------------------------------------
// Random feature / inducing point posterior equivalence

struct PosteriorMoments {
  Vector mean;
  Matrix cov;
};

struct EquivalenceResult {
  std::string name;
  PosteriorMoments feature_side;   // through the weight posterior
  PosteriorMoments inducing_side;  // through the inducing-output posterior
  double max_abs_discrepancy = 0.0;
};

/// Sparse-GP predictive at F given q(u) = N(m, S) at inducing inputs with
/// kernel blocks K_FF, K_FZ, K_ZZ:
///   mean = K_FZ K_ZZ^{-1} m,  cov = K_FF - K_FZ K_ZZ^{-1} (K_ZZ - S) K_ZZ^{-1} K_ZF.
PosteriorMoments inducing_predictive(const Matrix& kff, const Matrix& kfz, const Matrix& kzz, const Vector& m,
                                     const Matrix& s);

/// Random feature block: weight posterior N(mu, Sigma) against the inducing
/// form with m = Φ(Z) mu, S = Φ(Z) Sigma Φ(Z)ᵀ and K̂ = Φ Φᵀ.
EquivalenceResult random_feature_equivalence(const RandomFeatureBlock& block, const Matrix& f, const Matrix& z,
                                             const Vector& mu, const Matrix& sigma);

/// Inducing point block: features Ψ(x) = K(x, Z) L^{-T}, weight posterior
/// N(mu, Sigma), plus the offset K_FF - K_FZ K_ZZ^{-1} K_ZF on the feature
/// side, against the inducing form with m = L mu, S = L Sigma Lᵀ.
EquivalenceResult inducing_point_equivalence(const InducingPointBlock& block, const Matrix& f, const Vector& mu,
                                             const Matrix& sigma, bool with_offset = true);

struct EquivalenceConfig {
  Index instances = 10;
  Index n = 8;
  Index r = 4;
  Index d_in = 3;
  Activation sigma = Activation::ReLU;
  double rbf_lengthscale = 1.0;
  std::uint64_t seed = 2024;
  /// Inducing sets whose feature matrix has a larger condition number are redrawn.
  double max_condition = 1e6;
  int max_resamples = 10;
};

/// `instances` random feature cases plus `instances` inducing point (RBF) cases.
std::vector<EquivalenceResult> equivalence_check(const EquivalenceConfig& cfg);

std::string equivalence_csv(const std::vector<EquivalenceResult>& results);

}  // namespace bnnblocks
