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

#include "bnnblocks/addnn.hpp"

using namespace bnnblocks;

namespace {

AdditiveFunction product_function() {
  AdditiveFunction f;
  f.intercept = 0.5;
  f.subnets.push_back(Subnet{{0, 1}, [](const Matrix& x) { return Vector(x.col(0).cwiseProduct(x.col(1))); }});
  f.subnets.push_back(Subnet{{2}, [](const Matrix& x) { return Vector(x.col(2).array().square()); }});
  return f;
}

AddnnModel small_model(Variant v) {
  const Dataset d = generate_synthetic(1, 400, 1.0, 3);
  AddnnConfig cfg;
  cfg.variant = v;
  cfg.subnets = 3;
  cfg.features = 8;
  cfg.train.steps = 200;
  cfg.train.lasso_warmup = 50;
  cfg.train.decay_steps = 200;
  return fit_addnn(cfg, d.x, d.y).model;
}

}  // namespace

TEST_SUITE("addnn") {
  TEST_CASE("product interaction has the centered closed form") {
    const Matrix data = CounterRng(60).uniform_matrix(25, 3);
    const Matrix eval = CounterRng(61).uniform_matrix(4, 3);
    const AdditiveFunction f = product_function();
    const Vector i12 = anova_component(f, {0, 1}, eval, data);
    const double m0 = data.col(0).mean(), m1 = data.col(1).mean();
    for (Index i = 0; i < 4; ++i) CHECK(i12(i) == doctest::Approx((eval(i, 0) - m0) * (eval(i, 1) - m1)).epsilon(1e-12));
    CHECK_THROWS(anova_component(f, {1, 2}, eval, data));
    AnovaOptions force;
    force.force = true;
    CHECK(anova_component(f, {1, 2}, eval, data, force).cwiseAbs().maxCoeff() == 0.0);
    const Vector none = anova_component(f, {}, eval, data);
    CHECK(none(0) == doctest::Approx(0.5 + m0 * m1 + data.col(2).array().square().mean()));
  }

  TEST_CASE("single-baseline mode") {
    const Matrix data = CounterRng(62).uniform_matrix(10, 3);
    const Matrix eval = CounterRng(63).uniform_matrix(3, 3);
    AnovaOptions base;
    base.baseline = Vector::Constant(3, 0.25);
    const Vector i12 = anova_component(product_function(), {0, 1}, eval, data, base);
    for (Index i = 0; i < 3; ++i) CHECK(i12(i) == doctest::Approx((eval(i, 0) - 0.25) * (eval(i, 1) - 0.25)));
  }

  TEST_CASE("strengths of a known function") {
    CounterRng r(64);
    const Matrix data = r.uniform_matrix(400, 3);
    const AdditiveFunction f = product_function();
    StrengthOptions so;
    so.mc_draws = 2;
    so.eval_points = 400;
    so.background_points = 400;
    so.heatmap_pairs = 1;
    so.heatmap_grid = 5;
    const InteractionReport rep = interaction_strengths([&](Index) { return f; }, {{0, 1}, {2}}, data, so);
    // Var[(x1 - 1/2)(x2 - 1/2)] = 1/144 for independent uniforms.
    REQUIRE(rep.find({0, 1}) != nullptr);
    CHECK(rep.find({0, 1})->strength == doctest::Approx(1.0 / 12.0).epsilon(0.1));
    CHECK(rep.find({0, 1})->strength_std == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rep.find({0, 2}) == nullptr);
    CHECK(rep.ranked_interactions() == std::vector<Subset>{{0, 1}});
    for (std::size_t i = 1; i < rep.entries.size(); ++i) CHECK(rep.entries[i - 1].strength >= rep.entries[i].strength);
    REQUIRE(rep.heatmaps.size() == 1);
    CHECK(rep.heatmaps[0].mean.rows() == 5);
    CHECK(heatmap_csv(rep.heatmaps[0]).rfind("x1_quantile,x2_quantile,x1,x2,mean,std\n", 0) == 0);
    CHECK(interactions_csv(rep).rfind("subset,strength,std\n", 0) == 0);
    // Subnet order does not change strengths.
    const InteractionReport swapped = interaction_strengths(
        [&](Index) {
          AdditiveFunction g = f;
          std::swap(g.subnets[0], g.subnets[1]);
          return g;
        },
        {{2}, {0, 1}}, data, so);
    CHECK(swapped.find({0, 1})->strength == doctest::Approx(rep.find({0, 1})->strength));
  }

  TEST_CASE("enumeration budget") {
    CHECK(enumeration_budget({{0, 1}, {1, 2}}) == 6);
    Subset big;
    for (Index i = 0; i < 20; ++i) big.push_back(i);
    CHECK_THROWS(enumeration_budget({big}, 1000));
  }

  TEST_CASE("model structure and cluster extraction") {
    for (Variant v : {Variant::McDropout, Variant::RF, Variant::DKL, Variant::DRF}) {
      CAPTURE(to_string(v));
      const AddnnModel m = small_model(v);
      CHECK_NOTHROW(require_additive(m.net));
      const Matrix norms = first_layer_norms(m.net, m.state);
      CHECK(norms.rows() == 3);
      CHECK(norms.cols() == 10);
      ClusterThreshold t;
      t.absolute = 1e300;
      for (const auto& c : extract_clusters(m, t)) CHECK(c.empty());
      const auto clusters = extract_clusters(m);
      const AdditiveFunction f = additive_function(m, mean_weights(m.state), clusters);
      const Matrix x = CounterRng(65).uniform_matrix(6, 10);
      // With every feature kept in every cluster the decomposition is exact.
      ClusterThreshold all;
      all.absolute = -1.0;
      const AdditiveFunction full = additive_function(m, mean_weights(m.state), extract_clusters(m, all));
      Matrix xs = standardize(x, m.x_mean, m.x_std);
      const Vector direct = (forward(m.net, xs, mean_weights(m.state)).array() * m.y_std + m.y_mean).matrix();
      CHECK((full(x) - direct).cwiseAbs().maxCoeff() < 1e-9);
      CHECK(f(x).allFinite());
      CHECK(parse_variant(to_string(v)) == v);
    }
  }

  TEST_CASE("non-additive networks are rejected") {
    const Skeleton s = parse_skeleton("layers = [3, 2, 2, 1]");
    const BayesNet net = build_network(s, FeaturePolicy::uniform(s, parse_recipe("fb")));
    CHECK_THROWS(require_additive(net));
  }
}
