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
// Variational posteriors over function-block weights, the minibatch ELBO,
// the optimizer loop and posterior-predictive sampling.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnnblocks/autodiff.hpp"
#include "bnnblocks/network.hpp"
#include "bnnblocks/rng.hpp"

namespace bnnblocks {

enum class FamilyKind { Gaussian, PointMass, Mixture };

struct GroupFamily {
  FamilyKind kind = FamilyKind::Gaussian;
  bool full_covariance = false;  // Gaussian only
  double keep_prob = 0.9;        // Mixture only

  static GroupFamily gaussian(bool full = false) { return {FamilyKind::Gaussian, full, 1.0}; }
  static GroupFamily point_mass() { return {FamilyKind::PointMass, false, 1.0}; }
  static GroupFamily mixture(double keep) { return {FamilyKind::Mixture, false, keep}; }
};

enum class PriorKind { StandardNormal, GroupLasso };

/// Group lasso: one group per row of the weight matrix (per incoming unit).
struct GroupPrior {
  PriorKind kind = PriorKind::StandardNormal;
  double lambda = 1.0;

  static GroupPrior standard_normal() { return {PriorKind::StandardNormal, 1.0}; }
  static GroupPrior group_lasso(double lambda) { return {PriorKind::GroupLasso, lambda}; }
};

enum class LikelihoodKind { Gaussian, Softmax };

struct Likelihood {
  LikelihoodKind kind = LikelihoodKind::Gaussian;
  double noise_var = 1.0;   // initial δ²
  bool train_noise = true;  // δ² learned through its log
  Index classes = 0;        // Softmax: labels are 0..classes-1 in the first target column

  static Likelihood gaussian(double noise_var = 1.0, bool trainable = true) {
    return {LikelihoodKind::Gaussian, noise_var, trainable, 0};
  }
  static Likelihood softmax(Index classes) { return {LikelihoodKind::Softmax, 1.0, false, classes}; }
};

std::string to_string(FamilyKind k);
std::string to_string(PriorKind k);

/// Variational parameters for every function-block group of a network.
struct VariationalState {
  std::vector<GroupFamily> family;
  std::vector<GroupPrior> prior;
  std::vector<Matrix> mean;               // r x d
  std::vector<Matrix> log_std;            // r x d for diagonal Gaussians, else empty
  std::vector<std::vector<Matrix>> chol;  // full Gaussians: d unconstrained r x r factors
  std::vector<Matrix> bias;               // 1 x d point estimates, or empty
  Matrix log_noise_var = Matrix::Zero(1, 1);
  Likelihood likelihood;

  Index group_count() const { return static_cast<Index>(mean.size()); }
  double noise_var() const { return std::exp(log_noise_var(0, 0)); }

  /// Trainable parameters in a fixed order; the noise variance is last when trainable.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::vector<std::string> parameter_names() const;
};

/// Starts every mean at the network's initial means and every scale at `init_std`.
VariationalState init_state(const BayesNet& net, std::vector<GroupFamily> family, std::vector<GroupPrior> prior,
                            Likelihood likelihood, double init_std = 1e-2);
VariationalState init_state(const BayesNet& net, GroupFamily family, GroupPrior prior, Likelihood likelihood,
                            double init_std = 1e-2);

/// Tape handles for a state's parameters, in the order of parameters().
struct StateVars {
  std::vector<Var> mean;
  std::vector<Var> log_std;
  std::vector<std::vector<Var>> chol;
  std::vector<Var> bias;
  Var log_noise_var;
  std::vector<Var> flat;
};

StateVars bind_state(Tape& tape, const VariationalState& q);

/// Random numbers consumed by one ELBO evaluation, kept separate from the
/// evaluation itself so gradients can be checked with common random numbers.
struct ElboNoise {
  std::vector<std::vector<Matrix>> eps;     // [sample][group]: r x d normals or n x r keep masks
  std::vector<std::vector<Matrix>> offset;  // [sample][group]: n x d normals where a node has an offset
};

ElboNoise sample_elbo_noise(const BayesNet& net, const VariationalState& q, Index batch_rows, Index mc_samples,
                            CounterRng& rng);

struct ElboTerms {
  Var elbo;
  Var loglik;  // (n_total / |B|) * MC-averaged batch log-likelihood
  Var kl;
};

/// ELBO = (n_total / |B|) Σ_batch (1/S) Σ_s log p(y | f_s) - KL(q || p).
ElboTerms elbo_on_tape(const BayesNet& net, const VariationalState& q, const StateVars& vars, const Matrix& x_batch,
                       const Matrix& y_batch, Index n_total, const ElboNoise& noise);

/// Value of one doubly stochastic ELBO estimate.
double elbo_estimate(const BayesNet& net, const VariationalState& q, const Matrix& x_batch, const Matrix& y_batch,
                     Index n_total, Index mc_samples, CounterRng& rng);

Var kl_on_tape(const VariationalState& q, const StateVars& vars);
/// Closed-form KL(q || p) summed over groups (point masses use the negative log prior).
double kl_term(const VariationalState& q);

/// Weights with every group at its mean.
Weights mean_weights(const VariationalState& q);
/// One posterior draw. Mixture groups drop whole rows (incoming units).
Weights sample_weights(const BayesNet& net, const VariationalState& q, CounterRng& rng);

struct TrainConfig {
  Index steps = 2000;
  Index batch = 100;
  double lr = 0.01;
  /// lr_t = lr * decay_rate^(t / decay_steps)
  double decay_rate = 0.1;
  Index decay_steps = 2000;
  Index mc_samples = 1;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Group-lasso penalties are handled by a row-wise soft-threshold after each
  /// Adam step instead of through their subgradient, so rows reach exact zero.
  /// The threshold for a row is lr_t * (lambda / n) / rms(sqrt(v_hat) + eps).
  bool proximal_lasso = true;
  /// Steps during which proximal group-lasso penalties are switched off.
  Index lasso_warmup = 0;
};

struct TraceRow {
  Index step = 0;
  double neg_elbo = 0.0;
  double kl = 0.0;
  double loglik = 0.0;
};

struct TrainResult {
  VariationalState state;
  std::vector<TraceRow> trace;
};

/// Adam on -ELBO / n_total with minibatches drawn without replacement per epoch.
/// Throws TrainingError on a non-finite loss, naming the step and the term.
TrainResult train(const BayesNet& net, VariationalState q, const Matrix& x, const Matrix& y, const TrainConfig& cfg);

class TrainingError : public Error {
 public:
  using Error::Error;
};

std::string trace_csv(const std::vector<TraceRow>& trace);

struct Prediction {
  Matrix mean;      // n x output_dim
  Matrix variance;  // n x output_dim
  std::vector<Matrix> draws;
};

struct PredictOptions {
  Index mc_samples = 100;
  std::uint64_t seed = 0;
  bool include_noise = false;  // add δ² to the variance (Gaussian likelihood)
  bool keep_draws = true;
};

/// Draw s uses stream s of `seed`, so prefixes of the draw sequence agree across mc_samples.
Prediction predict(const BayesNet& net, const VariationalState& q, const Matrix& x, const PredictOptions& options = {});

}  // namespace bnnblocks
