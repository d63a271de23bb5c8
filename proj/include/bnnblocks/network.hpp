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
// Expansion of a skeleton into a concrete network: every non-input node gets
// a chain of feature stages (random feature or inducing point blocks) followed
// by one function block whose weight matrix carries the posterior.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bnnblocks/autodiff.hpp"
#include "bnnblocks/features.hpp"
#include "bnnblocks/skeleton.hpp"

namespace bnnblocks {

enum class BiasMode { None, RandomInRB, TrainableInFB };

std::string_view to_string(BiasMode b);
BiasMode parse_bias_mode(std::string_view text);

enum class StageKind { RB, IPB };

struct FeatureStage {
  StageKind kind = StageKind::RB;
  Index r = 3;
  Activation sigma = Activation::ReLU;       // RB
  double rho = 0.0;                          // RB weight scale; <= 0 means 1/sqrt(d_in)
  KernelSpec kernel = KernelSpec::rbf(1.0);  // IPB
  bool offset = false;                       // IPB: add the residual-variance correction
};

/// Feature stages applied in order before the node's function block.
/// Text form: stages joined by '+', ending in "fb", e.g. "rb:3:relu+fb",
/// "ipb:10:rbf:1.5+fb", "ipb:10:rbf:1.5:offset+fb", or just "fb".
struct NodeRecipe {
  std::vector<FeatureStage> stages;
};

std::string format_recipe(const NodeRecipe& recipe);
NodeRecipe parse_recipe(std::string_view text);

struct FeaturePolicy {
  /// nodes[l][i] for l >= 1; nodes[0] is unused.
  std::vector<std::vector<NodeRecipe>> nodes;

  static FeaturePolicy uniform(const Skeleton& s, const NodeRecipe& hidden, const NodeRecipe& output);
  static FeaturePolicy uniform(const Skeleton& s, const NodeRecipe& all) { return uniform(s, all, all); }
};

struct FeatureBlock {
  StageKind kind = StageKind::RB;
  RandomFeatureBlock rb;
  InducingPointBlock ipb;
  bool offset = false;

  Index input_dim() const { return kind == StageKind::RB ? rb.input_dim() : ipb.input_dim(); }
  Index output_dim() const { return kind == StageKind::RB ? rb.feature_count() : ipb.feature_count(); }
};

/// Linear map phi -> phi V (+ bias); V is r x d with column k holding v_k.
struct FunctionBlock {
  Index r = 0;
  Index d = 0;
  Index group = 0;
};

struct NetworkNode {
  Index layer = 0;
  Index index = 0;
  std::vector<Index> inputs;  // source nodes in layer - 1
  std::vector<FeatureBlock> features;
  FunctionBlock fb;
  /// Applied to this node's output where it is consumed; never applied to outputs.
  Activation activation = Activation::Identity;
};

/// Weight draw (or means) for every function block, indexed by group.
template <class T>
struct WeightsT {
  std::vector<T> v;     // r x d
  std::vector<T> bias;  // 1 x d; empty / invalid when the block has no bias
  /// Optional n x r multiplicative masks on each block's input (per-row dropout).
  std::vector<Matrix> input_mask;
  /// Optional n x d standard normal draws for the inducing point residual-variance correction.
  std::vector<Matrix> offset_noise;
};

using Weights = WeightsT<Matrix>;
using TapeWeights = WeightsT<Var>;

struct BuildOptions {
  BiasMode bias = BiasMode::None;
  std::uint64_t seed = 0;
  /// Training inputs from which inducing points are drawn (required for IPB stages).
  const Matrix* inducing_source = nullptr;
};

class BayesNet {
 public:
  BayesNet() = default;
  /// Assembles a network from already built blocks (used by build_network and model loading).
  BayesNet(Skeleton skeleton, FeaturePolicy policy, BuildOptions options,
           std::vector<std::vector<NetworkNode>> nodes, Weights initial);

  const Skeleton& skeleton() const { return skeleton_; }
  const FeaturePolicy& policy() const { return policy_; }
  BiasMode bias_mode() const { return bias_; }
  std::uint64_t seed() const { return seed_; }
  Index depth() const { return skeleton_.depth(); }
  /// nodes()[l][i] for l >= 1; nodes()[0] is empty.
  const std::vector<std::vector<NetworkNode>>& nodes() const { return nodes_; }
  const std::vector<NetworkNode>& layer(Index l) const { return nodes_[static_cast<std::size_t>(l)]; }
  const NetworkNode& node(Index l, Index i) const { return layer(l)[static_cast<std::size_t>(i)]; }
  const NetworkNode& group_node(Index g) const {
    const auto& [l, i] = groups_[static_cast<std::size_t>(g)];
    return node(l, i);
  }
  Index group_count() const { return static_cast<Index>(groups_.size()); }
  bool has_bias() const { return bias_ == BiasMode::TrainableInFB; }
  /// Deterministic initial weight means drawn from the build seed.
  const Weights& initial_means() const { return initial_; }
  Index input_dim() const { return skeleton_.input_dim(); }
  Index output_dim() const { return skeleton_.output_dim(); }

 private:
  Skeleton skeleton_;
  FeaturePolicy policy_;
  BiasMode bias_ = BiasMode::None;
  std::uint64_t seed_ = 0;
  std::vector<std::vector<NetworkNode>> nodes_;
  std::vector<std::pair<Index, Index>> groups_;
  Weights initial_;
};

BayesNet build_network(const Skeleton& s, const FeaturePolicy& policy, const BuildOptions& options = {});

/// Per-layer node outputs F^l: result[l][i] is n x width. result[0] holds input slices.
std::vector<std::vector<Matrix>> forward_layers(const BayesNet& net, const Matrix& x, const Weights& w);
std::vector<std::vector<Var>> forward_layers(const BayesNet& net, const Var& x, const TapeWeights& w);

/// Final output: last-layer node outputs concatenated (n x output_dim).
Matrix forward(const BayesNet& net, const Matrix& x, const Weights& w);
Var forward(const BayesNet& net, const Var& x, const TapeWeights& w);

/// Input to node (l, i)'s function block (after all feature stages).
Matrix node_features(const BayesNet& net, const std::vector<std::vector<Matrix>>& layers, Index l, Index i);

/// Weights with every function block set to zero.
Weights zero_weights(const BayesNet& net);

}  // namespace bnnblocks
