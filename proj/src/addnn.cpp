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
#include "bnnblocks/addnn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "bnnblocks/rng.hpp"

namespace bnnblocks {
namespace {

constexpr Index kChunkRows = Index{1} << 12;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool is_subset(const Subset& small, const Subset& big) {
  return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

Subset sorted(Subset s) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

Matrix run_stages(const NetworkNode& n, Matrix phi) {
  for (const auto& b : n.features) phi = b.kind == StageKind::RB ? b.rb.features(phi) : b.ipb.features(phi);
  return phi;
}

// Mean of sub.eval over the product grid of `other_values` (one vector per
// feature in `others`), with `fixed` features set row by row from
// `fixed_values`. Returns one value per fixed row.
Vector marginal_mean(const Subnet& sub, Index p, const Subset& fixed, const Matrix& fixed_values, const Subset& others,
                     const std::vector<Vector>& other_values) {
  const Index n_fixed = fixed_values.rows();
  Index combos = 1;
  for (const auto& v : other_values) combos *= v.size();
  Vector out = Vector::Zero(n_fixed);
  const Index per_chunk = std::max<Index>(1, kChunkRows / combos);
  std::vector<Index> digit(others.size());
  for (Index start = 0; start < n_fixed; start += per_chunk) {
    const Index count = std::min(per_chunk, n_fixed - start);
    Matrix x = Matrix::Zero(count * combos, p);
    for (Index r = 0; r < count; ++r) {
      std::fill(digit.begin(), digit.end(), 0);
      for (Index c = 0; c < combos; ++c) {
        const Index row = r * combos + c;
        for (std::size_t f = 0; f < fixed.size(); ++f) x(row, fixed[f]) = fixed_values(start + r, static_cast<Index>(f));
        for (std::size_t o = 0; o < others.size(); ++o) x(row, others[o]) = other_values[o](digit[o]);
        for (std::size_t o = 0; o < others.size(); ++o) {
          if (++digit[o] < other_values[o].size()) break;
          digit[o] = 0;
        }
      }
    }
    const Vector g = sub.eval(x);
    for (Index r = 0; r < count; ++r) out(start + r) = g.segment(r * combos, combos).mean();
  }
  return out;
}

Vector quantiles(Vector values, const Vector& levels) {
  std::sort(values.data(), values.data() + values.size());
  Vector out(levels.size());
  const auto n = static_cast<double>(values.size());
  for (Index i = 0; i < levels.size(); ++i) {
    const double pos = levels(i) * (n - 1.0);
    const auto lo = static_cast<Index>(std::floor(pos));
    const Index hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    out(i) = (1.0 - frac) * values(lo) + frac * values(hi);
  }
  return out;
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::McDropout: return "mcdropout";
    case Variant::RF: return "rf";
    case Variant::DKL: return "dkl";
    case Variant::DRF: return "drf";
  }
  return "mcdropout";
}

Variant parse_variant(std::string_view text) {
  if (text == "mcdropout") return Variant::McDropout;
  if (text == "rf") return Variant::RF;
  if (text == "dkl") return Variant::DKL;
  if (text == "drf") return Variant::DRF;
  throw Error("unknown variant '" + std::string(text) + "' (expected mcdropout, rf, dkl or drf)");
}

AddnnModel build_addnn(const AddnnConfig& config, const Matrix& x_raw, const Vector& y_raw) {
  if (config.subnets < 1 || config.width1 < 1 || config.width2 < 1 || config.features < 1) {
    throw Error("addnn: sub-network count and widths must be positive");
  }
  require_shape(x_raw.rows() == y_raw.size(), "addnn data", x_raw.rows(), x_raw.cols(), y_raw.size(), 1);
  if (x_raw.rows() < 2) throw Error("addnn: need at least two training rows");
  AddnnModel m;
  m.config = config;
  column_stats(x_raw, m.x_mean, m.x_std);
  for (Index j = 0; j < m.x_std.size(); ++j)
    if (m.x_std(j) == 0.0) m.x_std(j) = 1.0;
  m.y_mean = y_raw.mean();
  m.y_std = std::sqrt((y_raw.array() - m.y_mean).square().mean());
  if (m.y_std == 0.0) m.y_std = 1.0;
  const Matrix xs = standardize(x_raw, m.x_mean, m.x_std);

  AdditiveOptions opt;
  opt.inputs = x_raw.cols();
  opt.branch_depth = 2;
  opt.widths = {config.width1, config.width2};
  opt.hidden = config.hidden;
  const Skeleton s = additive_skeleton(config.subnets, {}, opt);
  const BuildOptions build{BiasMode::TrainableInFB, config.train.seed, &xs};

  NodeRecipe upper;
  switch (config.variant) {
    case Variant::McDropout: break;
    case Variant::RF: upper.stages = {FeatureStage{StageKind::RB, config.features, Activation::ReLU}}; break;
    case Variant::DRF:
      upper.stages = {FeatureStage{StageKind::RB, config.features, Activation::ReLU},
                      FeatureStage{StageKind::RB, config.features, Activation::ReLU}};
      break;
    case Variant::DKL: {
      // Median pairwise distance of first-layer features at initialization.
      const FeaturePolicy plain = FeaturePolicy::uniform(s, NodeRecipe{});
      const BayesNet probe = build_network(s, plain, build);
      const Index rows = std::min<Index>(xs.rows(), 200);
      const auto layers = forward_layers(probe, Matrix(xs.topRows(rows)), probe.initial_means());
      std::vector<double> dists;
      for (Index j = 0; j < config.subnets; ++j) {
        const Matrix h = apply(config.hidden, layers[1][static_cast<std::size_t>(j)]);
        for (Index a = 0; a < rows; ++a)
          for (Index b = a + 1; b < rows; ++b) dists.push_back((h.row(a) - h.row(b)).norm());
      }
      std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2), dists.end());
      const double ls = std::max(dists[dists.size() / 2], 1e-3);
      FeatureStage st{StageKind::IPB, config.features};
      st.kernel = KernelSpec::rbf(ls);
      upper.stages = {st};
      break;
    }
  }
  FeaturePolicy policy = FeaturePolicy::uniform(s, NodeRecipe{});
  for (auto& r : policy.nodes[2]) r = upper;
  m.net = build_network(s, policy, build);

  const Index k = config.subnets;
  const GroupFamily upper_family =
      config.variant == Variant::McDropout ? GroupFamily::mixture(config.keep_prob) : GroupFamily::gaussian();
  std::vector<GroupFamily> family;
  std::vector<GroupPrior> prior;
  for (Index g = 0; g < m.net.group_count(); ++g) {
    if (g < k) {
      family.push_back(GroupFamily::point_mass());
      prior.push_back(GroupPrior::group_lasso(config.lambda));
    } else {
      family.push_back(upper_family);
      prior.push_back(GroupPrior::standard_normal());
    }
  }
  m.state = init_state(m.net, family, prior, Likelihood::gaussian(1.0, true), config.init_std);
  return m;
}

AddnnFit fit_addnn(const AddnnConfig& config, const Matrix& x_raw, const Vector& y_raw) {
  AddnnFit fit{build_addnn(config, x_raw, y_raw), {}};
  AddnnModel& m = fit.model;
  const Matrix xs = standardize(x_raw, m.x_mean, m.x_std);
  const Matrix ys = ((y_raw.array() - m.y_mean) / m.y_std).matrix();
  TrainResult res = train(m.net, m.state, xs, ys, config.train);
  m.state = std::move(res.state);
  fit.trace = std::move(res.trace);

  return fit;
}

Prediction predict_addnn(const AddnnModel& model, const Matrix& x_raw, const PredictOptions& options) {
  PredictOptions inner = options;
  inner.include_noise = false;
  Prediction p = predict(model.net, model.state, standardize(x_raw, model.x_mean, model.x_std), inner);
  p.mean = (p.mean.array() * model.y_std + model.y_mean).matrix();
  p.variance *= model.y_std * model.y_std;
  for (auto& d : p.draws) d = (d.array() * model.y_std + model.y_mean).matrix();
  if (options.include_noise) p.variance.array() += model.noise_var();
  return p;
}

void require_additive(const BayesNet& net) {
  const Skeleton& s = net.skeleton();
  const Index depth = s.depth();
  auto fail = [](const std::string& why) -> void { throw Error("addnn: not an additive network: " + why); };
  if (depth < 2) fail("needs at least one hidden layer");
  if (s.layer_size(depth) != 1 || s.output_dim() != 1) fail("needs a single scalar output");
  for (Index i = 0; i < s.layer_size(0); ++i)
    if (s.node(0, i).width != 1) fail("input nodes must have width 1");
  const Index k = s.layer_size(1);
  for (Index l = 2; l < depth; ++l) {
    if (s.layer_size(l) != k) fail("every hidden layer needs one node per sub-network");
    for (Index i = 0; i < k; ++i)
      if (s.incoming(l, i) != std::vector<Index>{i}) fail("sub-networks must not share hidden nodes");
  }
  if (static_cast<Index>(s.incoming(depth, 0).size()) != k) fail("the output must read every sub-network");
  for (Index i = 0; i < k; ++i)
    if (!net.node(1, i).features.empty()) fail("first-layer nodes must be function blocks only");
  if (!net.node(depth, 0).features.empty()) fail("the output node must be a function block only");
}

Matrix first_layer_norms(const BayesNet& net, const VariationalState& q) {
  require_additive(net);
  const Skeleton& s = net.skeleton();
  Matrix norms = Matrix::Zero(s.layer_size(1), s.input_dim());
  for (Index j = 0; j < s.layer_size(1); ++j) {
    const NetworkNode& n = net.node(1, j);
    const Matrix& v = q.mean[static_cast<std::size_t>(n.fb.group)];
    for (std::size_t r = 0; r < n.inputs.size(); ++r) norms(j, s.input_offset(n.inputs[r])) = v.row(static_cast<Index>(r)).norm();
  }
  return norms;
}

std::vector<Subset> extract_clusters(const BayesNet& net, const VariationalState& q, const ClusterThreshold& t) {
  const Matrix norms = first_layer_norms(net, q);
  const double max_norm = norms.size() ? norms.maxCoeff() : 0.0;
  const double thr = t.absolute ? *t.absolute : t.fraction * max_norm;
  std::vector<Subset> clusters(static_cast<std::size_t>(norms.rows()));
  for (Index j = 0; j < norms.rows(); ++j)
    for (Index i = 0; i < norms.cols(); ++i)
      if (norms(j, i) > thr) clusters[static_cast<std::size_t>(j)].push_back(i);
  return clusters;
}

std::vector<Subset> extract_clusters(const AddnnModel& model, const ClusterThreshold& t) {
  return extract_clusters(model.net, model.state, t);
}

Vector AdditiveFunction::operator()(const Matrix& x) const {
  Vector out = Vector::Constant(x.rows(), intercept);
  for (const auto& s : subnets) out += s.eval(x);
  return out;
}

AdditiveFunction additive_function(const AddnnModel& model, const Weights& w, const std::vector<Subset>& clusters) {
  const BayesNet& net = model.net;
  require_additive(net);
  const Skeleton& s = net.skeleton();
  const Index k = s.layer_size(1);
  const Index depth = s.depth();
  if (static_cast<Index>(clusters.size()) != k) {
    throw Error("additive_function: expected " + std::to_string(k) + " clusters, got " + std::to_string(clusters.size()));
  }
  const NetworkNode& out_node = net.node(depth, 0);
  const Matrix& v_out = w.v[static_cast<std::size_t>(out_node.fb.group)];
  const Matrix& b_out = w.bias[static_cast<std::size_t>(out_node.fb.group)];

  AdditiveFunction f;
  f.intercept = model.y_mean + (b_out.size() ? model.y_std * b_out(0, 0) : 0.0);
  Index row_offset = 0;
  for (Index j = 0; j < k; ++j) {
    Subnet sub;
    sub.cluster = sorted(clusters[static_cast<std::size_t>(j)]);
    struct Layer {
      const NetworkNode* node;
      Matrix v;
      Matrix b;
    };
    std::vector<Layer> chain;
    for (Index l = 1; l < depth; ++l) {
      const NetworkNode& n = net.node(l, j);
      chain.push_back({&n, w.v[static_cast<std::size_t>(n.fb.group)], w.bias[static_cast<std::size_t>(n.fb.group)]});
    }
    // Zero first-layer rows of features outside the cluster.
    const NetworkNode& first = net.node(1, j);
    std::vector<Index> features;
    for (std::size_t r = 0; r < first.inputs.size(); ++r) {
      const Index feat = s.input_offset(first.inputs[r]);
      features.push_back(feat);
      if (!std::binary_search(sub.cluster.begin(), sub.cluster.end(), feat)) chain[0].v.row(static_cast<Index>(r)).setZero();
    }
    const Index width = s.node(depth - 1, j).width;
    const Matrix v_rows = v_out.middleRows(row_offset, width);
    row_offset += width;
    std::vector<Activation> acts;
    for (Index l = 1; l < depth; ++l) acts.push_back(s.node(l, j).activation);
    const Vector x_mean = model.x_mean;
    const Vector x_std = model.x_std;
    const double y_std = model.y_std;
    sub.eval = [chain, features, v_rows, acts, x_mean, x_std, y_std](const Matrix& x) -> Vector {
      Matrix phi(x.rows(), static_cast<Index>(features.size()));
      for (std::size_t c = 0; c < features.size(); ++c) {
        const Index fc = features[c];
        phi.col(static_cast<Index>(c)) = (x.col(fc).array() - x_mean(fc)) / x_std(fc);
      }
      Matrix f;
      for (std::size_t l = 0; l < chain.size(); ++l) {
        if (l > 0) phi = apply(acts[l - 1], f);
        phi = run_stages(*chain[l].node, std::move(phi));
        f = phi * chain[l].v;
        if (chain[l].b.size()) f.rowwise() += chain[l].b.row(0);
      }
      return y_std * (apply(acts.back(), f) * v_rows).col(0);
    };
    f.subnets.push_back(std::move(sub));
  }
  return f;
}

Vector anova_component(const AdditiveFunction& f, const Subset& t_in, const Matrix& eval_points, const Matrix& data,
                       const AnovaOptions& options) {
  const Subset t = sorted(t_in);
  require_shape(eval_points.cols() == data.cols(), "anova_component", eval_points.rows(), eval_points.cols(), data.rows(),
                data.cols());
  const Index p = data.cols();
  for (Index i : t)
    if (i < 0 || i >= p) throw Error("anova_component: feature " + std::to_string(i + 1) + " out of range");
  bool contained = t.empty();
  for (const auto& sub : f.subnets) contained = contained || is_subset(t, sorted(sub.cluster));
  if (!contained && !options.force) {
    throw Error("anova_component: subset {" + subset_label(t) +
                "} is not contained in any input cluster; set force to evaluate it anyway");
  }
  if (options.baseline) require_shape(options.baseline->size() == p, "anova baseline", options.baseline->size(), 1, p, 1);

  const Index n_eval = eval_points.rows();
  Vector out = Vector::Constant(n_eval, t.empty() ? f.intercept : 0.0);
  CounterRng rng(options.seed);
  const auto perm = rng.permutation(data.rows());
  for (const auto& sub : f.subnets) {
    const Subset cluster = sorted(sub.cluster);
    if (!is_subset(t, cluster)) continue;
    const auto nt = static_cast<unsigned>(t.size());
    for (unsigned mask = 0; mask < (1u << nt); ++mask) {
      Subset s_feats;
      for (unsigned b = 0; b < nt; ++b)
        if (mask & (1u << b)) s_feats.push_back(t[b]);
      const double sign = ((nt - static_cast<unsigned>(s_feats.size())) % 2 == 0) ? 1.0 : -1.0;
      Subset others;
      std::set_difference(cluster.begin(), cluster.end(), s_feats.begin(), s_feats.end(), std::back_inserter(others));
      std::vector<Vector> other_values;
      if (options.baseline) {
        for (Index o : others) other_values.push_back(Vector::Constant(1, (*options.baseline)(o)));
      } else {
        Index per = data.rows();
        if (!others.empty()) {
          const double cap = std::pow(static_cast<double>(options.max_combinations), 1.0 / static_cast<double>(others.size()));
          per = std::clamp<Index>(static_cast<Index>(std::floor(cap + 1e-9)), 1, data.rows());
        }
        for (Index o : others) {
          Vector vals(per);
          for (Index r = 0; r < per; ++r) vals(r) = data(per == data.rows() ? r : perm[static_cast<std::size_t>(r)], o);
          other_values.push_back(std::move(vals));
        }
      }
      Matrix fixed(s_feats.empty() ? 1 : n_eval, static_cast<Index>(s_feats.size()));
      for (std::size_t c = 0; c < s_feats.size(); ++c) fixed.col(static_cast<Index>(c)) = eval_points.col(s_feats[c]);
      const Vector a = marginal_mean(sub, p, s_feats, fixed, others, other_values);
      if (s_feats.empty()) {
        out.array() += sign * a(0);
      } else {
        out += sign * a;
      }
    }
  }
  return out;
}

std::vector<Subset> InteractionReport::ranked_interactions() const {
  std::vector<Subset> out;
  for (const auto& e : entries)
    if (e.subset.size() >= 2) out.push_back(e.subset);
  return out;
}

const InteractionEntry* InteractionReport::find(const Subset& s) const {
  const Subset key = sorted(s);
  for (const auto& e : entries)
    if (e.subset == key) return &e;
  return nullptr;
}

namespace {

// Mean over the background rows of sub.eval with the `fixed` features
// overwritten row by row from `fixed_values`; one value per fixed row.
Vector background_mean(const Subnet& sub, const Subset& fixed, const Matrix& fixed_values, const Matrix& background) {
  const Index n_fixed = fixed_values.rows();
  const Index m = background.rows();
  Vector out(n_fixed);
  const Index per_chunk = std::max<Index>(1, kChunkRows / m);
  for (Index start = 0; start < n_fixed; start += per_chunk) {
    const Index count = std::min(per_chunk, n_fixed - start);
    Matrix x = background.replicate(count, 1);
    for (Index r = 0; r < count; ++r)
      for (std::size_t f = 0; f < fixed.size(); ++f)
        x.block(r * m, fixed[f], m, 1).setConstant(fixed_values(start + r, static_cast<Index>(f)));
    const Vector g = sub.eval(x);
    for (Index r = 0; r < count; ++r) out(start + r) = g.segment(r * m, m).mean();
  }
  return out;
}

// I_T at every evaluation point for each T ⊆ cluster with 1 <= |T| <= max_order,
// added into `acc`.
void add_components(const Subnet& sub, const Matrix& points, const Matrix& background, Index max_order,
                    std::map<Subset, Vector>& acc) {
  const Subset& cluster = sub.cluster;
  const auto c = static_cast<unsigned>(cluster.size());
  if (c == 0) return;
  const auto order = static_cast<unsigned>(max_order > 0 ? std::min<Index>(max_order, c) : c);
  const Index n = points.rows();
  std::map<unsigned, Vector> a;  // A_S by bitmask over cluster positions
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << c); ++mask) {
    const auto bits = static_cast<unsigned>(std::popcount(mask));
    if (bits > order) continue;
    Subset fixed;
    for (unsigned b = 0; b < c; ++b)
      if (mask & (std::uint64_t{1} << b)) fixed.push_back(cluster[b]);
    Matrix values(n, static_cast<Index>(fixed.size()));
    for (std::size_t f = 0; f < fixed.size(); ++f) values.col(static_cast<Index>(f)) = points.col(fixed[f]);
    if (fixed.empty()) {
      a[0] = Vector::Constant(n, background_mean(sub, fixed, Matrix(1, 0), background)(0));
    } else {
      a[static_cast<unsigned>(mask)] = background_mean(sub, fixed, values, background);
    }
  }
  for (const auto& [tmask, unused] : a) {
    (void)unused;
    if (tmask == 0) continue;
    Vector comp = Vector::Zero(n);
    for (unsigned smask = tmask;; smask = (smask - 1) & tmask) {
      comp += (std::popcount(tmask ^ smask) % 2 ? -1.0 : 1.0) * a.at(smask);
      if (smask == 0) break;
    }
    Subset key;
    for (unsigned b = 0; b < c; ++b)
      if (tmask & (1u << b)) key.push_back(cluster[b]);
    auto [it, inserted] = acc.try_emplace(key, Vector::Zero(n));
    it->second += comp;
  }
}

}  // namespace

InteractionReport interaction_strengths(const std::function<AdditiveFunction(Index draw)>& draw,
                                        const std::vector<Subset>& clusters, const Matrix& data,
                                        const StrengthOptions& options) {
  if (options.mc_draws < 1) throw Error("interaction_strengths: mc_draws must be >= 1");
  if (options.eval_points < 1 || options.background_points < 1) {
    throw Error("interaction_strengths: eval_points and background_points must be >= 1");
  }
  if (data.rows() < 1) throw Error("interaction_strengths: empty data");
  for (const auto& c : clusters)
    if (c.size() >= 31) throw Error("interaction_strengths: cluster of " + std::to_string(c.size()) + " features is too large");
  InteractionReport report;

  // Evaluation points are training rows; the background sample draws each
  // feature independently from its empirical marginal.
  const Index n_eval = std::min(options.eval_points, data.rows());
  CounterRng rng(options.seed, 7);
  const auto perm = rng.permutation(data.rows());
  Matrix points(n_eval, data.cols());
  for (Index k = 0; k < n_eval; ++k) points.row(k) = data.row(perm[static_cast<std::size_t>(k)]);
  Matrix background(options.background_points, data.cols());
  for (Index j = 0; j < data.cols(); ++j) {
    CounterRng col_rng(options.seed, 8 + static_cast<std::uint64_t>(j));
    for (Index k = 0; k < background.rows(); ++k)
      background(k, j) = data(static_cast<Index>(col_rng.below(static_cast<std::uint64_t>(data.rows()))), j);
  }

  std::map<Subset, std::vector<double>> per_draw;
  for (Index d = 0; d < options.mc_draws; ++d) {
    AdditiveFunction f = draw(d);
    if (f.subnets.size() != clusters.size()) throw Error("interaction_strengths: draw does not match the clusters");
    std::map<Subset, Vector> acc;
    for (std::size_t j = 0; j < clusters.size(); ++j) {
      f.subnets[j].cluster = sorted(clusters[j]);
      add_components(f.subnets[j], points, background, options.max_order, acc);
    }
    for (const auto& [key, values] : acc)
      per_draw[key].push_back(std::sqrt(values.squaredNorm() / static_cast<double>(n_eval)));
  }
  for (const auto& [key, vals] : per_draw) {
    const double n = static_cast<double>(vals.size());
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    report.entries.push_back({key, mean, vals.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0});
  }
  std::sort(report.entries.begin(), report.entries.end(), [](const auto& a, const auto& b) {
    if (a.strength != b.strength) return a.strength > b.strength;
    return a.subset < b.subset;
  });

  // Heatmaps for the strongest pairs.
  std::vector<Subset> pairs;
  for (const auto& e : report.entries)
    if (e.subset.size() == 2 && static_cast<Index>(pairs.size()) < options.heatmap_pairs) pairs.push_back(e.subset);
  if (!pairs.empty() && options.heatmap_grid > 0) {
    const Index gsz = options.heatmap_grid;
    Vector levels(gsz);
    for (Index u = 0; u < gsz; ++u) levels(u) = (static_cast<double>(u) + 0.5) / static_cast<double>(gsz);
    std::vector<Matrix> sum(pairs.size(), Matrix::Zero(gsz, gsz));
    std::vector<Matrix> sumsq(pairs.size(), Matrix::Zero(gsz, gsz));
    std::vector<Vector> grid_a, grid_b;
    for (const auto& pr : pairs) {
      grid_a.push_back(quantiles(data.col(pr[0]), levels));
      grid_b.push_back(quantiles(data.col(pr[1]), levels));
    }
    for (Index d = 0; d < options.mc_draws; ++d) {
      const AdditiveFunction f = draw(d);
      for (std::size_t q = 0; q < pairs.size(); ++q) {
        const Index fa = pairs[q][0];
        const Index fb = pairs[q][1];
        Matrix ab(gsz * gsz, 2);
        for (Index u = 0; u < gsz; ++u)
          for (Index v = 0; v < gsz; ++v) ab.row(u * gsz + v) << grid_a[q](u), grid_b[q](v);
        Matrix cell = Matrix::Zero(gsz, gsz);
        for (std::size_t j = 0; j < clusters.size(); ++j) {
          if (!is_subset(pairs[q], sorted(clusters[j]))) continue;
          const Subnet& sub = f.subnets[j];
          const Vector a_ab = background_mean(sub, pairs[q], ab, background);
          const Vector a_a = background_mean(sub, {fa}, Matrix(grid_a[q]), background);
          const Vector a_b = background_mean(sub, {fb}, Matrix(grid_b[q]), background);
          const double a0 = background_mean(sub, {}, Matrix(1, 0), background)(0);
          for (Index u = 0; u < gsz; ++u)
            for (Index v = 0; v < gsz; ++v) cell(u, v) += a_ab(u * gsz + v) - a_a(u) - a_b(v) + a0;
        }
        sum[q] += cell;
        sumsq[q] += cell.cwiseAbs2();
      }
    }
    const double n = static_cast<double>(options.mc_draws);
    for (std::size_t q = 0; q < pairs.size(); ++q) {
      Heatmap h;
      h.a = pairs[q][0];
      h.b = pairs[q][1];
      h.levels = levels;
      h.grid_a = grid_a[q];
      h.grid_b = grid_b[q];
      h.mean = sum[q] / n;
      h.std = n > 1 ? Matrix(((sumsq[q] - n * h.mean.cwiseAbs2()) / (n - 1.0)).cwiseMax(0.0).cwiseSqrt())
                    : Matrix(Matrix::Zero(gsz, gsz));
      report.heatmaps.push_back(std::move(h));
    }
  }
  if (options.top_k > 0 && static_cast<Index>(report.entries.size()) > options.top_k) {
    report.entries.resize(static_cast<std::size_t>(options.top_k));
  }
  return report;
}

InteractionReport interaction_strengths(const AddnnModel& model, const std::vector<Subset>& clusters,
                                        const Matrix& data_raw, const StrengthOptions& options) {
  auto draw = [&](Index d) {
    CounterRng rng(options.seed, static_cast<std::uint64_t>(d));
    return additive_function(model, sample_weights(model.net, model.state, rng), clusters);
  };
  return interaction_strengths(draw, clusters, data_raw, options);
}

Index enumeration_budget(const std::vector<Subset>& clusters, Index cap) {
  for (const auto& c : clusters) {
    const Subset s = sorted(c);
    if (s.size() >= 62 || (Index{1} << s.size()) > cap) {
      throw Error("enumeration budget exceeds cap " + std::to_string(cap) + ": a cluster has " +
                  std::to_string(s.size()) + " features; increase the group-lasso lambda to shrink the input clusters");
    }
  }
  std::set<Subset> seen;
  for (const auto& c : clusters) {
    const Subset s = sorted(c);
    const auto n = static_cast<unsigned>(s.size());
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
      Subset sub;
      for (unsigned b = 0; b < n; ++b)
        if (mask & (std::uint64_t{1} << b)) sub.push_back(s[b]);
      seen.insert(std::move(sub));
    }
    if (static_cast<Index>(seen.size()) > cap) {
      throw Error("enumeration budget exceeds cap " + std::to_string(cap) +
                  "; increase the group-lasso lambda to shrink the input clusters");
    }
  }
  return static_cast<Index>(seen.size());
}

std::string interactions_csv(const InteractionReport& report) {
  std::ostringstream out;
  out << "subset,strength,std\n";
  for (const auto& e : report.entries) out << subset_label(e.subset) << "," << fmt(e.strength) << "," << fmt(e.strength_std) << "\n";
  return out.str();
}

std::string heatmap_csv(const Heatmap& h) {
  std::ostringstream out;
  out << "x1_quantile,x2_quantile,x1,x2,mean,std\n";
  for (Index u = 0; u < h.mean.rows(); ++u)
    for (Index v = 0; v < h.mean.cols(); ++v)
      out << fmt(h.levels(u)) << "," << fmt(h.levels(v)) << "," << fmt(h.grid_a(u)) << "," << fmt(h.grid_b(v)) << ","
          << fmt(h.mean(u, v)) << "," << fmt(h.std(u, v)) << "\n";
  return out.str();
}

}  // namespace bnnblocks
