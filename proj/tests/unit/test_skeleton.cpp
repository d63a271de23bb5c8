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

#include "bnnblocks/skeleton.hpp"

using namespace bnnblocks;

TEST_SUITE("skeleton") {
  TEST_CASE("documented example parses") {
    const Skeleton s = parse_skeleton(R"(
# comment line
version = 1
layers = [4, 3, 2, 3, 1]
activations = [- | relu | tanh, relu | relu | identity]
widths = [1 | 2 | 2 | 2 | 1]
edges = [0.*>1.*, 1.0>2.0, 1.1>2.0, 1.2>2.1, 2.*>3.*, 3.*>4.*]
)");
    CHECK(s.depth() == 4);
    CHECK(s.input_dim() == 4);
    CHECK(s.output_dim() == 1);
    CHECK(s.node(2, 0).activation == Activation::Tanh);
    CHECK(s.incoming(2, 0) == std::vector<Index>{0, 1});
    CHECK(s.outgoing(1, 2) == std::vector<Index>{1});
    CHECK(s.edges(1).size() == 12);
  }

  TEST_CASE("serialize round trip") {
    for (const Skeleton& s : {chain_skeleton(3), multitask_skeleton(2, 3, 5, Activation::Tanh),
                              additive_skeleton(3, {{0, 1}, {2}, {1, 3}}, {4, 2, {2, 3}, Activation::Erf}),
                              additive_skeleton(10)}) {
      const std::string text = serialize_skeleton(s);
      CAPTURE(text);
      CHECK(parse_skeleton(text) == s);
      CHECK(serialize_skeleton(parse_skeleton(text)) == text);
    }
  }

  TEST_CASE("defaults fill missing fields") {
    const Skeleton s = parse_skeleton("layers = [2, 3, 1]");
    CHECK(s.edges(1).size() == 6);
    CHECK(s.node(1, 0).activation == Activation::ReLU);
    CHECK(s.node(1, 0).width == 2);
    CHECK(s.node(2, 0).activation == Activation::Identity);
  }

  TEST_CASE("input widths set feature offsets") {
    const Skeleton s = parse_skeleton("layers = [3, 1]\nwidths = [2, 1, 3 | 1]");
    CHECK(s.input_dim() == 6);
    CHECK(s.input_offset(2) == 3);
  }

  TEST_CASE("errors name the line and the problem") {
    auto message = [](const std::string& text) {
      try {
        parse_skeleton(text);
      } catch (const SkeletonError& e) {
        return std::string(e.what());
      }
      return std::string("no error");
    };
    CHECK(message("layers = [2, 2, 1]\nedges = [0.0>1.0, 0.1>1.0, 1.*>2.*]").find("dangling node 1.1") !=
          std::string::npos);
    CHECK(message("layers = [2, 1]\nedges = [0.*>1.*, 0.0>1.0]").find("duplicate edge") != std::string::npos);
    CHECK(message("layers = [2, 1]\nedges = [0.0>1.3]").find("missing node") != std::string::npos);
    CHECK(message("layers = [2, 1, 1]\nedges = [0.*>2.*]").find("non-adjacent") != std::string::npos);
    CHECK(message("layers = [2, 1]\ncolor = [red]").find("line 2") != std::string::npos);
    CHECK(message("layers = [2, 1]\nactivations = [- | swish]").find("activations") != std::string::npos);
    CHECK(message("layers = [2, 0]").find("empty layer") != std::string::npos);
    CHECK(message("version = 2\nlayers = [1, 1]").find("version") != std::string::npos);
    CHECK(message("edges = [0.*>1.*]").find("layers") != std::string::npos);
    CHECK(message("layers = [2, 1]\nwidths = [1 | 0]").find("positive width") != std::string::npos);
  }

  TEST_CASE("direct construction validates") {
    std::vector<std::vector<SkeletonNode>> layers{{{Activation::Identity, 1}}, {{Activation::ReLU, 2}, {Activation::ReLU, 2}}};
    CHECK_THROWS_AS(Skeleton(layers, {{}, {{0, 0}}}), SkeletonError);
    CHECK_NOTHROW(Skeleton(layers, {{}, {{0, 1}, {0, 0}}}));
  }

  TEST_CASE("presets") {
    const Skeleton add = additive_skeleton(4, {{0}, {1, 2}, {3}, {0, 3}}, {4, 2, {3}, Activation::ReLU});
    CHECK(hidden_components(add) == 4);
    CHECK(add.depth() == 3);
    CHECK(add.layer_size(1) == 4);
    CHECK(add.output_dim() == 1);
    CHECK(hidden_components(multitask_skeleton(3, 2)) == 3);
    CHECK(hidden_components(chain_skeleton(4)) == 1);
    CHECK_THROWS_AS(additive_skeleton(2, {{0}}), SkeletonError);
    CHECK_THROWS_AS(chain_skeleton(0), SkeletonError);
  }
}
