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
#include "bnnblocks/network.hpp"

#include <cmath>
#include <sstream>
#include <type_traits>

#include "bnnblocks/linalg.hpp"
#include "bnnblocks/rng.hpp"

namespace bnnblocks {
namespace {

template <class T>
using Layers = std::vector<std::vector<T>>;
using NodeGrid = std::vector<std::vector<NetworkNode>>;

template <class T>
T slice(const T& x, Index start, Index count) {
  if constexpr (std::is_same_v<T, Var>) {
    return slice_cols(x, start, count);
  } else {
    return x.middleCols(start, count);
  }
}

template <class T>
T concat(const std::vector<T>& parts) {
  if constexpr (std::is_same_v<T, Var>) {
    return hcat(std::span<const Var>(parts));
  } else {
    if (parts.size() == 1) return parts[0];
    Index cols = 0;
    for (const auto& p : parts) cols += p.cols();
    Matrix out(parts[0].rows(), cols);
    Index off = 0;
    for (const auto& p : parts) {
      out.middleCols(off, p.cols()) = p;
      off += p.cols();
    }
    return out;
  }
}

Var sqrt_safe(const Var& a) {
  const int id = static_cast<int>(a.tape().size());
  return a.tape().record(a.value().cwiseSqrt(), {a}, [a, id](const Matrix& g, Tape& t) {
    const Matrix& s = t.value(id);
    t.accumulate(a, (s.array() > 0.0).select(0.5 * g.array() / s.array(), 0.0).matrix());
  });
}

bool has_entry(const std::vector<Matrix>& v, Index g) {
  return static_cast<Index>(v.size()) > g && v[static_cast<std::size_t>(g)].size() != 0;
}

template <class T>
T node_input(const Skeleton& s, const Layers<T>& layers, const NetworkNode& n) {
  std::vector<T> parts;
  parts.reserve(n.inputs.size());
  for (Index j : n.inputs) {
    const Activation a = n.layer == 1 ? Activation::Identity : s.node(n.layer - 1, j).activation;
    parts.push_back(apply(a, layers[static_cast<std::size_t>(n.layer - 1)][static_cast<std::size_t>(j)]));
  }
  return concat(parts);
}

template <class T>
T run_stage(const FeatureBlock& b, const T& x) {
  return b.kind == StageKind::RB ? T(b.rb.features(x)) : T(b.ipb.features(x));
}

template <class T>
T function_block(const NetworkNode& n, const T& phi_in, const WeightsT<T>& w) {
  const Index g = n.fb.group;
  T phi = phi_in;
  if (has_entry(w.input_mask, g)) {
    const Matrix& m = w.input_mask[static_cast<std::size_t>(g)];
    require_shape(m.rows() == phi.rows() && m.cols() == phi.cols(), "input mask", phi.rows(), phi.cols(), m.rows(),
                  m.cols());
    if constexpr (std::is_same_v<T, Var>) {
      phi = cwise_product(phi, m);
    } else {
      phi = phi.cwiseProduct(m);
    }
  }
  const T& v = w.v[static_cast<std::size_t>(g)];
  require_shape(v.rows() == n.fb.r && v.cols() == n.fb.d, "function block weights", n.fb.r, n.fb.d, v.rows(), v.cols());
  T f;
  if constexpr (std::is_same_v<T, Var>) {
    f = matmul(phi, v);
    if (static_cast<Index>(w.bias.size()) > g && w.bias[static_cast<std::size_t>(g)].valid()) {
      f = add_row(f, w.bias[static_cast<std::size_t>(g)]);
    }
  } else {
    f = phi * v;
    if (has_entry(w.bias, g)) f.rowwise() += w.bias[static_cast<std::size_t>(g)].row(0);
  }
  return f;
}

// Adds sqrt(residual variance) * noise for inducing point stages flagged with an offset.
template <class T>
T add_offset(const NetworkNode& n, const std::vector<T>& stage_inputs, T f, const WeightsT<T>& w) {
  const Index g = n.fb.group;
  if (!has_entry(w.offset_noise, g)) return f;
  const Matrix& eps = w.offset_noise[static_cast<std::size_t>(g)];
  require_shape(eps.rows() == f.rows() && eps.cols() == f.cols(), "offset noise", f.rows(), f.cols(), eps.rows(),
                eps.cols());
  for (std::size_t s = 0; s < n.features.size(); ++s) {
    const FeatureBlock& b = n.features[s];
    if (b.kind != StageKind::IPB || !b.offset) continue;
    if constexpr (std::is_same_v<T, Var>) {
      Var sd = sqrt_safe(b.ipb.residual_variance(stage_inputs[s]));
      Var wide = matmul(sd, Matrix(Matrix::Ones(1, f.cols())));
      f = f + cwise_product(wide, eps);
    } else {
      const Vector sd = b.ipb.residual_variance(stage_inputs[s]).cwiseSqrt();
      f += sd.asDiagonal() * eps;
    }
  }
  return f;
}

template <class T>
T evaluate_node(const Skeleton& s, const Layers<T>& layers, const NetworkNode& n, const WeightsT<T>& w) {
  T phi = node_input(s, layers, n);
  std::vector<T> stage_inputs;
  stage_inputs.reserve(n.features.size());
  for (const auto& b : n.features) {
    stage_inputs.push_back(phi);
    phi = run_stage(b, phi);
  }
  T f = function_block(n, phi, w);
  return add_offset(n, stage_inputs, std::move(f), w);
}

template <class T>
Layers<T> propagate(const Skeleton& s, const NodeGrid& nodes, const T& x, const WeightsT<T>& w, Index last_layer) {
  require_shape(x.cols() == s.input_dim(), "forward", x.rows(), x.cols(), x.rows(), s.input_dim());
  if (static_cast<Index>(w.v.size()) < 1) throw ShapeError("forward: no weights supplied");
  Layers<T> layers(static_cast<std::size_t>(last_layer + 1));
  for (Index i = 0; i < s.layer_size(0); ++i) layers[0].push_back(slice(x, s.input_offset(i), s.node(0, i).width));
  for (Index l = 1; l <= last_layer; ++l) {
    for (const auto& n : nodes[static_cast<std::size_t>(l)]) {
      layers[static_cast<std::size_t>(l)].push_back(evaluate_node(s, layers, n, w));
    }
  }
  return layers;
}

std::uint64_t stage_stream(Index l, Index i, Index s) {
  return (static_cast<std::uint64_t>(l) << 40) | (static_cast<std::uint64_t>(i) << 16) | static_cast<std::uint64_t>(s);
}

}  // namespace

std::string_view to_string(BiasMode b) {
  switch (b) {
    case BiasMode::None: return "none";
    case BiasMode::RandomInRB: return "random-in-rb";
    case BiasMode::TrainableInFB: return "trainable-in-fb";
  }
  return "none";
}

BiasMode parse_bias_mode(std::string_view text) {
  if (text == "none") return BiasMode::None;
  if (text == "random-in-rb") return BiasMode::RandomInRB;
  if (text == "trainable-in-fb") return BiasMode::TrainableInFB;
  throw Error("unknown bias mode '" + std::string(text) + "'");
}

std::string format_recipe(const NodeRecipe& recipe) {
  std::ostringstream out;
  for (const auto& st : recipe.stages) {
    if (st.kind == StageKind::RB) {
      out << "rb:" << st.r << ":" << to_string(st.sigma);
      if (st.rho > 0.0) {
        char buf[40];
        std::snprintf(buf, sizeof buf, ":%.17g", st.rho);
        out << buf;
      }
    } else {
      out << "ipb:" << st.r << ":" << to_string(st.kernel);
      if (st.offset) out << ":offset";
    }
    out << "+";
  }
  out << "fb";
  return out.str();
}

NodeRecipe parse_recipe(std::string_view text) {
  NodeRecipe recipe;
  std::vector<std::string> stages;
  std::size_t start = 0;
  while (true) {
    const auto plus = text.find('+', start);
    stages.emplace_back(text.substr(start, plus == std::string_view::npos ? std::string_view::npos : plus - start));
    if (plus == std::string_view::npos) break;
    start = plus + 1;
  }
  if (stages.back() != "fb") throw Error("recipe '" + std::string(text) + "' must end with 'fb'");
  stages.pop_back();
  for (const auto& st : stages) {
    std::vector<std::string> parts;
    std::stringstream ss(st);
    std::string p;
    while (std::getline(ss, p, ':')) parts.push_back(p);
    auto fail = [&]() -> void { throw Error("recipe: malformed stage '" + st + "'"); };
    if (parts.size() < 3) fail();
    FeatureStage fs;
    try {
      fs.r = std::stol(parts[1]);
    } catch (const std::exception&) {
      fail();
    }
    if (fs.r < 1) fail();
    if (parts[0] == "rb") {
      fs.kind = StageKind::RB;
      fs.sigma = parse_activation(parts[2]);
      if (parts.size() == 4) {
        try {
          fs.rho = std::stod(parts[3]);
        } catch (const std::exception&) {
          fail();
        }
      } else if (parts.size() > 4) {
        fail();
      }
    } else if (parts[0] == "ipb") {
      fs.kind = StageKind::IPB;
      std::size_t next = 3;
      std::string kernel = parts[2];
      if (kernel == "rbf" && parts.size() > 3 && parts[3] != "offset") {
        kernel += ":" + parts[3];
        next = 4;
      }
      fs.kernel = parse_kernel(kernel);
      if (parts.size() == next + 1 && parts[next] == "offset") {
        fs.offset = true;
      } else if (parts.size() != next) {
        fail();
      }
    } else {
      fail();
    }
    recipe.stages.push_back(fs);
  }
  return recipe;
}

FeaturePolicy FeaturePolicy::uniform(const Skeleton& s, const NodeRecipe& hidden, const NodeRecipe& output) {
  FeaturePolicy p;
  p.nodes.resize(static_cast<std::size_t>(s.depth() + 1));
  for (Index l = 1; l <= s.depth(); ++l) {
    p.nodes[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(s.layer_size(l)), l == s.depth() ? output : hidden);
  }
  return p;
}

BayesNet::BayesNet(Skeleton skeleton, FeaturePolicy policy, BuildOptions options, NodeGrid nodes, Weights initial)
    : skeleton_(std::move(skeleton)),
      policy_(std::move(policy)),
      bias_(options.bias),
      seed_(options.seed),
      nodes_(std::move(nodes)),
      initial_(std::move(initial)) {
  for (Index l = 1; l <= skeleton_.depth(); ++l) {
    for (Index i = 0; i < skeleton_.layer_size(l); ++i) {
      const auto& n = node(l, i);
      if (n.fb.group != static_cast<Index>(groups_.size())) throw Error("network: function block groups out of order");
      groups_.emplace_back(l, i);
    }
  }
}

BayesNet build_network(const Skeleton& s, const FeaturePolicy& policy, const BuildOptions& options) {
  if (static_cast<Index>(policy.nodes.size()) != s.depth() + 1) {
    throw Error("build_network: policy covers " + std::to_string(policy.nodes.size()) + " layers, skeleton has " +
                std::to_string(s.depth() + 1));
  }
  NodeGrid nodes(static_cast<std::size_t>(s.depth() + 1));
  Weights init;
  for (Index l = 1; l <= s.depth(); ++l) {
    const auto& recipes = policy.nodes[static_cast<std::size_t>(l)];
    if (static_cast<Index>(recipes.size()) != s.layer_size(l)) {
      throw Error("build_network: layer " + std::to_string(l) + " has " + std::to_string(s.layer_size(l)) +
                  " nodes but the policy gives " + std::to_string(recipes.size()) + " recipes");
    }
    for (Index i = 0; i < s.layer_size(l); ++i) {
      NetworkNode n;
      n.layer = l;
      n.index = i;
      n.inputs = s.incoming(l, i);
      n.activation = s.node(l, i).activation;
      Index dim = 0;
      for (Index j : n.inputs) dim += s.node(l - 1, j).width;
      const auto& stages = recipes[static_cast<std::size_t>(i)].stages;
      for (std::size_t st = 0; st < stages.size(); ++st) {
        const FeatureStage& fs = stages[st];
        if (fs.r < 1) throw Error("build_network: stage width r must be positive");
        FeatureBlock b;
        b.kind = fs.kind;
        if (fs.kind == StageKind::RB) {
          const std::uint64_t seed = CounterRng(options.seed, stage_stream(l, i, Index(st))).next_u64();
          b.rb = RandomFeatureBlock(dim, fs.r, fs.sigma, seed, fs.rho, options.bias == BiasMode::RandomInRB);
        } else {
          if (options.inducing_source == nullptr) {
            throw Error("build_network: inducing point block at node " + std::to_string(l) + "." + std::to_string(i) +
                        " requested without inducing points");
          }
          const Matrix& src = *options.inducing_source;
          if (src.cols() != s.input_dim()) {
            throw ShapeError("build_network: inducing source has " + std::to_string(src.cols()) +
                             " columns, skeleton expects " + std::to_string(s.input_dim()));
          }
          if (fs.r > src.rows()) {
            throw Error("build_network: inducing point block wants r = " + std::to_string(fs.r) + " points but only " +
                        std::to_string(src.rows()) + " inputs are available");
          }
          b.offset = fs.offset;
          bool built = false;
          for (std::uint64_t attempt = 0; attempt < 10 && !built; ++attempt) {
            CounterRng rng(options.seed, (std::uint64_t{1} << 61) | (stage_stream(l, i, Index(st)) << 4) | attempt);
            const auto perm = rng.permutation(src.rows());
            Matrix xs(fs.r, src.cols());
            for (Index k = 0; k < fs.r; ++k) xs.row(k) = src.row(perm[static_cast<std::size_t>(k)]);
            const auto layers = propagate<Matrix>(s, nodes, xs, init, l - 1);
            Matrix z = node_input(s, layers, n);
            for (const auto& prev : n.features) z = run_stage(prev, z);
            try {
              b.ipb = InducingPointBlock(fs.kernel, std::move(z));
              built = true;
            } catch (const FactorizationError&) {
            }
          }
          if (!built) {
            throw FactorizationError("build_network: K(Z, Z) singular for 10 inducing point draws at node " +
                                     std::to_string(l) + "." + std::to_string(i));
          }
        }
        dim = b.output_dim();
        n.features.push_back(std::move(b));
      }
      n.fb = FunctionBlock{dim, s.node(l, i).width, static_cast<Index>(init.v.size())};
      CounterRng rng(options.seed, (std::uint64_t{1} << 62) | static_cast<std::uint64_t>(n.fb.group));
      init.v.push_back(rng.normal_matrix(n.fb.r, n.fb.d) / std::sqrt(static_cast<double>(n.fb.r)));
      init.bias.push_back(options.bias == BiasMode::TrainableInFB ? Matrix(Matrix::Zero(1, n.fb.d)) : Matrix());
      nodes[static_cast<std::size_t>(l)].push_back(std::move(n));
    }
  }
  return BayesNet(s, policy, options, std::move(nodes), std::move(init));
}

std::vector<std::vector<Matrix>> forward_layers(const BayesNet& net, const Matrix& x, const Weights& w) {
  return propagate<Matrix>(net.skeleton(), net.nodes(), x, w, net.depth());
}

std::vector<std::vector<Var>> forward_layers(const BayesNet& net, const Var& x, const TapeWeights& w) {
  return propagate<Var>(net.skeleton(), net.nodes(), x, w, net.depth());
}

Matrix forward(const BayesNet& net, const Matrix& x, const Weights& w) {
  return concat(forward_layers(net, x, w).back());
}

Var forward(const BayesNet& net, const Var& x, const TapeWeights& w) {
  return concat(forward_layers(net, x, w).back());
}

Matrix node_features(const BayesNet& net, const std::vector<std::vector<Matrix>>& layers, Index l, Index i) {
  const NetworkNode& n = net.node(l, i);
  Matrix phi = node_input(net.skeleton(), layers, n);
  for (const auto& b : n.features) phi = run_stage(b, phi);
  return phi;
}

Weights zero_weights(const BayesNet& net) {
  Weights w;
  for (Index g = 0; g < net.group_count(); ++g) {
    const auto& fb = net.group_node(g).fb;
    w.v.push_back(Matrix::Zero(fb.r, fb.d));
    w.bias.push_back(net.has_bias() ? Matrix(Matrix::Zero(1, fb.d)) : Matrix());
  }
  return w;
}

}  // namespace bnnblocks
