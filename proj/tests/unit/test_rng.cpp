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

#include <algorithm>
#include <set>

#include "bnnblocks/rng.hpp"

using namespace bnnblocks;

TEST_SUITE("rng") {
  TEST_CASE("splitmix64 reference values") {
    // Outputs of the published SplitMix64 generator seeded with 0.
    std::uint64_t state = 0;
    auto next = [&state] {
      state += 0x9E3779B97F4A7C15ULL;
      return splitmix64(state - 0x9E3779B97F4A7C15ULL);
    };
    CHECK(next() == 0xE220A8397B1DCDAFULL);
    CHECK(next() == 0x6E789E6AA1B965F4ULL);
    CHECK(next() == 0x06C45D188009454FULL);
  }

  TEST_CASE("streams are reproducible and independent") {
    CounterRng a(42, 3), b(42, 3), c(42, 4);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
      const auto x = a.next_u64();
      CHECK(x == b.next_u64());
      differs = differs || x != c.next_u64();
    }
    CHECK(differs);
  }

  TEST_CASE("split does not advance the parent") {
    CounterRng a(9), b(9);
    const CounterRng child = a.split(5);
    CHECK(a.next_u64() == b.next_u64());
    CounterRng again = CounterRng(9).split(5);
    CounterRng copy = child;
    CHECK(copy.next_u64() == again.next_u64());
    CHECK(CounterRng(9).split(6).next_u64() != CounterRng(9).split(5).next_u64());
  }

  TEST_CASE("uniforms lie in (0, 1] with the right moments") {
    CounterRng r(1);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double u = r.uniform();
      REQUIRE(u > 0.0);
      REQUIRE(u <= 1.0);
      sum += u;
      sq += u * u;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
    CHECK(sq / n - (sum / n) * (sum / n) == doctest::Approx(1.0 / 12).epsilon(0.02));
  }

  TEST_CASE("normals have zero mean and unit variance") {
    CounterRng r(2);
    const Matrix z = r.normal_matrix(400, 500);
    CHECK(std::abs(z.mean()) < 0.01);
    CHECK((z.array() - z.mean()).square().mean() == doctest::Approx(1.0).epsilon(0.01));
  }

  TEST_CASE("below and permutation") {
    CounterRng r(3);
    for (int i = 0; i < 1000; ++i) CHECK(r.below(7) < 7);
    auto p = r.permutation(50);
    std::sort(p.begin(), p.end());
    for (Index i = 0; i < 50; ++i) CHECK(p[static_cast<std::size_t>(i)] == i);
  }
}
