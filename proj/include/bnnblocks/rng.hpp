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
#include <vector>

#include "bnnblocks/core.hpp"

namespace bnnblocks {

/// SplitMix64 output function.
constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Counter-based 64-bit generator.
///
/// The i-th output (i = 1, 2, ...) of stream `s` under seed `k` is
///
///     key  = splitmix64(k ^ splitmix64(s + 0xD1B54A32D192ED03))
///     x_i  = splitmix64(key + i * 0x9E3779B97F4A7C15)
///
/// Uniforms are ((x >> 11) + 1) * 2^-53, which lies in (0, 1]. Normals use
/// the Box-Muller pair (r cos t, r sin t) with r = sqrt(-2 ln u1), t = 2 pi u2,
/// consumed cosine first. Only integer arithmetic and libm log/sqrt/cos/sin are
/// involved, so streams are reproducible across platforms and implementations.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform on (0, 1].
  double uniform();
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() <= p; }

  /// Independent generator for sub-stream `stream`. Does not advance this one.
  CounterRng split(std::uint64_t stream) const;

  Matrix normal_matrix(Index rows, Index cols);
  Matrix uniform_matrix(Index rows, Index cols);
  /// Fisher-Yates permutation of 0..n-1.
  std::vector<Index> permutation(Index n);

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace bnnblocks
