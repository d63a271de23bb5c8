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
#include <numbers>

#include "bnnblocks/bench.hpp"

using namespace bnnblocks;

TEST_SUITE("bench") {
  TEST_CASE("synthetic functions at fixed points") {
    CHECK(synthetic_function(1, Vector::Constant(10, 0.5)) == doctest::Approx(10.0 / std::sqrt(2.0) + 7.5));
    CHECK(synthetic_function(4, Vector::Ones(10)) == doctest::Approx(26.25 - 5.0 * std::numbers::e));
    CHECK_THROWS(synthetic_function(5, Vector::Ones(10)));
    CHECK(synthetic_truth(1, 1.0).interactions == std::vector<Subset>{{0, 1}});
  }

  TEST_CASE("generation is deterministic and parts are independent") {
    const Dataset a = generate_synthetic(2, 50, 1.0, 7, 0), b = generate_synthetic(2, 50, 1.0, 7, 0);
    const Dataset c = generate_synthetic(2, 50, 1.0, 7, 1);
    CHECK(dataset_csv(a) == dataset_csv(b));
    CHECK(a.x != c.x);
    CHECK(a.x.minCoeff() > 0.0);
    CHECK(a.x.maxCoeff() <= 1.0);
    const Dataset clean = generate_synthetic(3, 20, 0.0, 7, 0);
    for (Index i = 0; i < 20; ++i) CHECK(clean.y(i) == synthetic_function(3, clean.x.row(i).transpose()));
  }

  TEST_CASE("csv parsing") {
    const Dataset d = parse_csv("a,y,b\n1,2,3\n4,5,6\n7,8,9.5\n", "y", false);
    Matrix expect(3, 2);
    expect << 1, 3, 4, 6, 7, 9.5;
    CHECK(d.x == expect);
    CHECK(d.y == Vector::LinSpaced(3, 2, 8));
    CHECK(d.feature_names == std::vector<std::string>{"a", "b"});
    const Dataset rt = parse_csv(dataset_csv(d), "y", false);
    CHECK(rt.x == d.x);
    CHECK(rt.y == d.y);
  }

  TEST_CASE("csv errors") {
    auto message = [](const std::string& text, const std::string& target, bool standardize) {
      try {
        parse_csv(text, target, standardize);
      } catch (const Error& e) {
        return std::string(e.what());
      }
      return std::string("no error");
    };
    CHECK(message("a,y\n1,2\n", "z", false).find("missing column 'z'") != std::string::npos);
    CHECK(message("a,y\n1,2\nabc,3\n", "y", false).find("(row 2, col 1)") != std::string::npos);
    CHECK(message("a,y\n1,2\n1,3\n", "y", true).find("constant") != std::string::npos);
    CHECK(message("a,y\n1,2,3\n", "y", false).find("cells") != std::string::npos);
    CHECK(message("", "y", false).find("header") != std::string::npos);
    CHECK_THROWS(ingest_csv("/nonexistent/file.csv", "y", false));
  }

  TEST_CASE("standardization round trip") {
    const Dataset d = parse_csv("a,b,y\n1,10,0\n2,30,1\n4,20,2\n", "y", true);
    CHECK(d.standardized);
    CHECK(std::abs(d.x.col(0).mean()) < 1e-12);
    CHECK((unstandardize(d.x, d.x_mean, d.x_std) - raw_features(d)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(raw_features(d)(2, 0) == doctest::Approx(4.0));
  }

  TEST_CASE("splits") {
    const Dataset d = generate_synthetic(1, 100, 1.0, 1);
    const Split s = random_split(d, 0.1, 3);
    CHECK(s.test.rows() == 10);
    CHECK(s.train.rows() == 90);
    CHECK(random_split(d, 0.1, 3).test.x == s.test.x);
    CHECK_THROWS(random_split(d, 0.0, 3));
  }

  TEST_CASE("metrics") {
    const Vector y = Vector::LinSpaced(4, 0, 3);
    CHECK(rmse(y, y) == 0.0);
    CHECK(mean_log_likelihood(y, Vector::Ones(4), y) == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)));
    CHECK_THROWS(mean_log_likelihood(y, Vector::Zero(4), y));
    Vector p(4);
    p << 1, 0, 3, 2;
    Vector q(4);
    q << 2, 0, 3, 1;
    Vector yp(4);
    yp << 3, 1, 2, 0;
    CHECK(rmse(p, y) == doctest::Approx(rmse(q, yp)));
  }

  TEST_CASE("top-rank recall") {
    CHECK(top_rank_recall({{0, 1}}, {{0, 1}, {2, 3}}) == 1.0);
    CHECK(top_rank_recall({{0, 1}, {3, 4}}, {{0, 1}, {6, 7}, {3, 4}}) == 0.5);
    CHECK(top_rank_recall({{0, 1}}, {{0, 1, 2}}) == 1.0);
    CHECK(top_rank_recall({{0, 1}}, {{2, 3}, {0, 1}}) == 0.0);
    CHECK(subset_label({0, 1}) == "1;2");
  }
}
