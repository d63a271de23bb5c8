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
// Computation skeletons: layered DAGs whose nodes carry an activation and a
// replication width. See docs/skeleton-format.md for the text grammar.

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "bnnblocks/core.hpp"

namespace bnnblocks {

struct SkeletonNode {
  Activation activation = Activation::ReLU;
  Index width = 2;

  bool operator==(const SkeletonNode&) const = default;
};

/// Edge from node `src` of layer l-1 to node `dst` of layer l.
struct SkeletonEdge {
  Index src = 0;
  Index dst = 0;

  auto operator<=>(const SkeletonEdge&) const = default;
};

class SkeletonError : public Error {
 public:
  using Error::Error;
};

/// Layer 0 holds the inputs; the last layer holds the outputs. Input node
/// widths give the number of feature columns each input node reads, in order.
class Skeleton {
 public:
  Skeleton() = default;
  /// Validates and normalizes (sorts edges). Throws SkeletonError.
  Skeleton(std::vector<std::vector<SkeletonNode>> layers, std::vector<std::vector<SkeletonEdge>> edges);

  Index depth() const { return static_cast<Index>(layers_.size()) - 1; }
  Index layer_size(Index l) const { return static_cast<Index>(layers_[static_cast<std::size_t>(l)].size()); }
  const SkeletonNode& node(Index l, Index i) const {
    return layers_[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
  }
  const std::vector<std::vector<SkeletonNode>>& layers() const { return layers_; }
  /// Edges into layer l (l >= 1), sorted; edges(0) is empty.
  const std::vector<SkeletonEdge>& edges(Index l) const { return edges_[static_cast<std::size_t>(l)]; }
  /// Sources in layer l-1 feeding node i of layer l, ascending.
  std::vector<Index> incoming(Index l, Index i) const;
  /// Targets in layer l+1 fed by node i of layer l, ascending.
  std::vector<Index> outgoing(Index l, Index i) const;

  /// Total number of input feature columns.
  Index input_dim() const;
  /// First feature column read by input node i.
  Index input_offset(Index i) const;
  /// Total output width.
  Index output_dim() const;
  Index output_count() const { return layer_size(depth()); }

  bool operator==(const Skeleton&) const = default;

 private:
  std::vector<std::vector<SkeletonNode>> layers_;
  std::vector<std::vector<SkeletonEdge>> edges_;
};

Skeleton parse_skeleton(std::string_view text);
std::string serialize_skeleton(const Skeleton& s);

/// Chain `inputs -> 1 -> ... -> 1` with `depth` non-input layers.
Skeleton chain_skeleton(Index depth, Index inputs = 4, Activation hidden = Activation::ReLU);

/// Inputs feed `shared` hidden nodes; each of `tasks` output nodes reads every shared node.
Skeleton multitask_skeleton(Index shared, Index tasks, Index inputs = 4, Activation hidden = Activation::ReLU);

struct AdditiveOptions {
  Index inputs = 10;
  /// Number of hidden layers in every branch.
  Index branch_depth = 2;
  /// Width of each branch's hidden layers (branch_depth entries, or one to broadcast).
  std::vector<Index> widths = {2};
  Activation hidden = Activation::ReLU;
};

/// k parallel branches, each a chain over its input group, summed by one
/// linear output node. Empty `groups` gives every branch the full input set.
/// Groups use 0-based input indices.
Skeleton additive_skeleton(Index k, const std::vector<std::vector<Index>>& groups = {},
                           const AdditiveOptions& options = {});

/// Number of connected components among layers 1..depth-1.
Index hidden_components(const Skeleton& s);

}  // namespace bnnblocks
