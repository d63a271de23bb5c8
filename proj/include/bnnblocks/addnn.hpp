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

// Additive networks f(x) = c + Σ_j g_j(x_{T_j}) built from parallel
// sub-networks with a sparsity-inducing first layer, and the functional
// ANOVA machinery used to read interactions off a trained model.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bnnblocks/bench.hpp"
#include "bnnblocks/network.hpp"
#include "bnnblocks/vi.hpp"

namespace bnnblocks {

/// Posterior used above the first layer:
///   McDropout  FB with two-point mixture weights,
///   RF         random feature block + FB with Gaussian weights,
///   DRF        two random feature blocks + FB with Gaussian weights,
///   DKL        inducing point block (RBF) + FB with Gaussian weights.
/// The first layer is always a point mass with a group-lasso prior.
enum class Variant { McDropout, RF, DKL, DRF };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view text);

struct AddnnConfig {
  Index subnets = 10;
  Index width1 = 4;   // first hidden layer of every sub-network
  Index width2 = 16;  // second hidden layer of every sub-network
  Activation hidden = Activation::ReLU;
  Variant variant = Variant::McDropout;
  /// Group-lasso strength on the first layer (in units of the full-data ELBO).
  double lambda = 50.0;
  double keep_prob = 0.9;
  /// Width r of random feature / inducing point blocks.
  Index features = 32;
  double init_std = 1e-2;
  TrainConfig train = default_train();

  static TrainConfig default_train() {
    TrainConfig t;
    t.steps = 3000;
    t.decay_steps = 3000;
    t.lasso_warmup = 600;
    return t;
  }
};

struct AddnnModel {
  AddnnConfig config;
  BayesNet net;
  VariationalState state;
  Vector x_mean;
  Vector x_std;
  double y_mean = 0.0;
  double y_std = 1.0;

  Index inputs() const { return x_mean.size(); }
  /// δ² on the raw target scale.
  double noise_var() const { return state.noise_var() * y_std * y_std; }
};

/// Builds the skeleton, network and initial posterior. Standardization
/// statistics come from the raw training data.
AddnnModel build_addnn(const AddnnConfig& config, const Matrix& x_raw, const Vector& y_raw);

struct AddnnFit {
  AddnnModel model;
  std::vector<TraceRow> trace;
};

AddnnFit fit_addnn(const AddnnConfig& config, const Matrix& x_raw, const Vector& y_raw);

/// Raw-scale predictive moments; `include_noise` adds the raw-scale δ².
Prediction predict_addnn(const AddnnModel& model, const Matrix& x_raw, const PredictOptions& options = {});

/// Throws unless the network is an additive stack with function-block-only first and output layers.
void require_additive(const BayesNet& net);

struct ClusterThreshold {
  double fraction = 0.01;          // of the largest first-layer group norm
  std::optional<double> absolute;  // overrides `fraction`
};

/// Feature i belongs to cluster j iff the norm of sub-network j's first-layer
/// weight row for i exceeds the threshold.
std::vector<Subset> extract_clusters(const BayesNet& net, const VariationalState& q, const ClusterThreshold& t = {});
std::vector<Subset> extract_clusters(const AddnnModel& model, const ClusterThreshold& t = {});

/// First-layer group norms: result(j, i) for sub-network j and feature i.
Matrix first_layer_norms(const BayesNet& net, const VariationalState& q);

struct Subnet {
  Subset cluster;
  /// Raw-scale contribution at raw-scale points (n x p); only cluster columns matter.
  std::function<Vector(const Matrix&)> eval;
};

struct AdditiveFunction {
  double intercept = 0.0;
  std::vector<Subnet> subnets;

  Vector operator()(const Matrix& x) const;
};

/// Sub-network contributions for one weight draw, with first-layer rows outside each cluster zeroed.
AdditiveFunction additive_function(const AddnnModel& model, const Weights& w, const std::vector<Subset>& clusters);

struct AnovaOptions {
  /// Evaluate subsets outside every cluster (their component is identically zero).
  bool force = false;
  /// Replace the empirical expectations by evaluation at this single point.
  std::optional<Vector> baseline;
  /// Largest product-marginal grid averaged per point; bigger grids are subsampled.
  Index max_combinations = Index{1} << 20;
  std::uint64_t seed = 0;
};

/// I_T(x) = Π_{i∈T}(I - E_i) Π_{i∉T} E_i f at each evaluation point, with E_i
/// the empirical marginal of feature i in `data`. Only sub-networks whose
/// cluster contains T contribute, each marginalized over its own cluster.
Vector anova_component(const AdditiveFunction& f, const Subset& t, const Matrix& eval_points, const Matrix& data,
                       const AnovaOptions& options = {});

struct InteractionEntry {
  Subset subset;
  double strength = 0.0;      // mean over draws of the empirical l2 norm
  double strength_std = 0.0;  // std over draws
};

struct Heatmap {
  Index a = 0;
  Index b = 0;
  Vector levels;  // quantile levels shared by both axes
  Vector grid_a;
  Vector grid_b;
  Matrix mean;  // mean(u, v) at (grid_a(u), grid_b(v))
  Matrix std;
};

struct InteractionReport {
  std::vector<InteractionEntry> entries;  // descending strength, lexicographic tie-break
  std::vector<Heatmap> heatmaps;

  /// Subsets of size >= 2 in report order.
  std::vector<Subset> ranked_interactions() const;
  const InteractionEntry* find(const Subset& s) const;
};

struct StrengthOptions {
  Index mc_draws = 50;
  Index top_k = 0;  // 0 keeps every entry
  /// Training rows at which each component is evaluated for its l2 norm.
  Index eval_points = 128;
  /// Rows of the product-of-marginals sample that replaces each expectation.
  Index background_points = 64;
  /// Largest interaction order reported (0 = the full cluster).
  Index max_order = 3;
  Index heatmap_pairs = 5;  // pairs (by strength) that get a heatmap
  Index heatmap_grid = 50;
  std::uint64_t seed = 0;
};

/// Strengths of every nonempty subset (up to max_order) of every cluster,
/// averaged over posterior draws.
InteractionReport interaction_strengths(const std::function<AdditiveFunction(Index draw)>& draw,
                                        const std::vector<Subset>& clusters, const Matrix& data,
                                        const StrengthOptions& options = {});
InteractionReport interaction_strengths(const AddnnModel& model, const std::vector<Subset>& clusters,
                                        const Matrix& data_raw, const StrengthOptions& options = {});

/// Number of distinct subsets (including the empty set) over all clusters.
/// Throws when it exceeds `cap`.
Index enumeration_budget(const std::vector<Subset>& clusters, Index cap = 100000);

std::string interactions_csv(const InteractionReport& report);
std::string heatmap_csv(const Heatmap& h);

}  // namespace bnnblocks
