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
#include "bnnblocks/skeleton.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

namespace bnnblocks {
namespace {

std::string node_name(Index l, Index i) { return std::to_string(l) + "." + std::to_string(i); }

// Returns an empty string when the structure is valid.
std::string structure_problem(const std::vector<std::vector<SkeletonNode>>& layers,
                              const std::vector<std::vector<SkeletonEdge>>& edges) {
  if (layers.size() < 2) return "a skeleton needs an input layer and at least one more layer";
  if (edges.size() != layers.size()) return "edge lists do not match the number of layers";
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].empty()) return "layer " + std::to_string(l) + " is empty";
    for (std::size_t i = 0; i < layers[l].size(); ++i) {
      if (layers[l][i].width < 1) return "node " + node_name(Index(l), Index(i)) + " has width < 1";
    }
  }
  if (!edges[0].empty()) return "layer 0 cannot have incoming edges";
  for (std::size_t l = 1; l < layers.size(); ++l) {
    const auto n_src = static_cast<Index>(layers[l - 1].size());
    const auto n_dst = static_cast<Index>(layers[l].size());
    std::vector<bool> has_in(static_cast<std::size_t>(n_dst), false);
    std::vector<bool> has_out(static_cast<std::size_t>(n_src), false);
    for (std::size_t e = 0; e < edges[l].size(); ++e) {
      const auto& edge = edges[l][e];
      if (edge.src < 0 || edge.src >= n_src || edge.dst < 0 || edge.dst >= n_dst) {
        return "edge " + node_name(Index(l) - 1, edge.src) + ">" + node_name(Index(l), edge.dst) +
               " references a missing node";
      }
      if (e > 0 && edges[l][e - 1] == edge) {
        return "duplicate edge " + node_name(Index(l) - 1, edge.src) + ">" + node_name(Index(l), edge.dst);
      }
      has_in[static_cast<std::size_t>(edge.dst)] = true;
      has_out[static_cast<std::size_t>(edge.src)] = true;
    }
    for (Index i = 0; i < n_dst; ++i) {
      if (!has_in[static_cast<std::size_t>(i)]) return "dangling node " + node_name(Index(l), i) + ": no incoming edge";
    }
    for (Index i = 0; i < n_src; ++i) {
      if (!has_out[static_cast<std::size_t>(i)]) {
        return "dangling node " + node_name(Index(l) - 1, i) + ": no outgoing edge";
      }
    }
  }
  return {};
}

std::vector<SkeletonEdge> complete_edges(Index n_src, Index n_dst) {
  std::vector<SkeletonEdge> out;
  for (Index s = 0; s < n_src; ++s)
    for (Index d = 0; d < n_dst; ++d) out.push_back({s, d});
  return out;
}

// ---------------------------------------------------------------------------
// Text grammar

struct Field {
  int line = 0;
  std::string body;  // text between the brackets, or the raw scalar value
};

class ParseFailure {
 public:
  ParseFailure(int line, std::string field) : line_(line), field_(std::move(field)) {}
  [[noreturn]] void fail(const std::string& msg) const {
    throw SkeletonError("skeleton line " + std::to_string(line_) + ", field '" + field_ + "': " + msg);
  }

 private:
  int line_;
  std::string field_;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::string> split_groups(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto bar = s.find('|', start);
    out.push_back(trim(s.substr(start, bar == std::string_view::npos ? std::string_view::npos : bar - start)));
    if (bar == std::string_view::npos) break;
    start = bar + 1;
  }
  return out;
}

std::optional<Index> parse_index(std::string_view tok) {
  Index v = 0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end || tok.empty()) return std::nullopt;
  return v;
}

std::map<std::string, Field> read_fields(std::string_view text) {
  std::map<std::string, Field> fields;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw SkeletonError("skeleton line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const ParseFailure at(line_no, key);
    if (key != "version" && key != "layers" && key != "activations" && key != "widths" && key != "edges") {
      at.fail("unknown field");
    }
    if (fields.count(key) != 0) at.fail("field given twice");
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key != "version") {
      if (value.size() < 2 || value.front() != '[' || value.back() != ']') at.fail("expected a bracketed list");
      value = trim(std::string_view(value).substr(1, value.size() - 2));
    }
    fields[key] = Field{line_no, value};
  }
  return fields;
}

}  // namespace

Skeleton::Skeleton(std::vector<std::vector<SkeletonNode>> layers, std::vector<std::vector<SkeletonEdge>> edges)
    : layers_(std::move(layers)), edges_(std::move(edges)) {
  for (auto& e : edges_) std::sort(e.begin(), e.end());
  const std::string problem = structure_problem(layers_, edges_);
  if (!problem.empty()) throw SkeletonError("skeleton: " + problem);
}

std::vector<Index> Skeleton::incoming(Index l, Index i) const {
  std::vector<Index> out;
  for (const auto& e : edges(l))
    if (e.dst == i) out.push_back(e.src);
  return out;
}

std::vector<Index> Skeleton::outgoing(Index l, Index i) const {
  std::vector<Index> out;
  for (const auto& e : edges(l + 1))
    if (e.src == i) out.push_back(e.dst);
  std::sort(out.begin(), out.end());
  return out;
}

Index Skeleton::input_dim() const { return input_offset(layer_size(0)); }

Index Skeleton::input_offset(Index i) const {
  Index off = 0;
  for (Index j = 0; j < i; ++j) off += node(0, j).width;
  return off;
}

Index Skeleton::output_dim() const {
  Index w = 0;
  for (const auto& n : layers_.back()) w += n.width;
  return w;
}

Skeleton parse_skeleton(std::string_view text) {
  const auto fields = read_fields(text);

  if (auto it = fields.find("version"); it != fields.end() && it->second.body != "1") {
    ParseFailure(it->second.line, "version").fail("unsupported version '" + it->second.body + "'");
  }
  const auto lit = fields.find("layers");
  if (lit == fields.end()) throw SkeletonError("skeleton: missing field 'layers'");
  const ParseFailure at_layers(lit->second.line, "layers");
  std::vector<Index> sizes;
  for (const auto& tok : split_tokens(lit->second.body)) {
    const auto v = parse_index(tok);
    if (!v) at_layers.fail("'" + tok + "' is not a node count");
    if (*v < 1) at_layers.fail("empty layer " + std::to_string(sizes.size()));
    sizes.push_back(*v);
  }
  if (sizes.size() < 2) at_layers.fail("need an input layer and at least one more layer");
  const std::size_t depth = sizes.size() - 1;

  std::vector<std::vector<SkeletonNode>> layers(sizes.size());
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    SkeletonNode def;
    def.activation = l == 0 || l == depth ? Activation::Identity : Activation::ReLU;
    def.width = l == 0 || l == depth ? 1 : 2;
    layers[l].assign(static_cast<std::size_t>(sizes[l]), def);
  }

  // Per-layer groups: one token broadcasts, otherwise one token per node.
  auto per_node = [&](const char* key, auto&& assign) {
    const auto it = fields.find(key);
    if (it == fields.end()) return;
    const ParseFailure at(it->second.line, key);
    const auto groups = split_groups(it->second.body);
    if (groups.size() != sizes.size()) {
      at.fail("expected " + std::to_string(sizes.size()) + " '|'-separated layer groups, got " +
              std::to_string(groups.size()));
    }
    for (std::size_t l = 0; l < groups.size(); ++l) {
      const auto toks = split_tokens(groups[l]);
      if (toks.size() != 1 && toks.size() != static_cast<std::size_t>(sizes[l])) {
        at.fail("layer " + std::to_string(l) + " needs 1 or " + std::to_string(sizes[l]) + " entries, got " +
                std::to_string(toks.size()));
      }
      for (std::size_t i = 0; i < layers[l].size(); ++i) {
        assign(at, l, layers[l][i], toks.size() == 1 ? toks[0] : toks[i]);
      }
    }
  };

  per_node("activations", [](const ParseFailure& at, std::size_t l, SkeletonNode& n, const std::string& tok) {
    if (l == 0) {
      if (tok != "-") at.fail("input nodes carry no activation; use '-'");
      n.activation = Activation::Identity;
      return;
    }
    try {
      n.activation = parse_activation(tok);
    } catch (const Error& e) {
      at.fail(e.what());
    }
  });
  per_node("widths", [](const ParseFailure& at, std::size_t, SkeletonNode& n, const std::string& tok) {
    const auto v = parse_index(tok);
    if (!v || *v < 1) at.fail("'" + tok + "' is not a positive width");
    n.width = *v;
  });

  std::vector<std::vector<SkeletonEdge>> edges(sizes.size());
  const auto eit = fields.find("edges");
  const int edge_line = eit == fields.end() ? 0 : eit->second.line;
  const ParseFailure at_edges(edge_line, "edges");
  if (eit == fields.end()) {
    for (std::size_t l = 1; l < sizes.size(); ++l) edges[l] = complete_edges(sizes[l - 1], sizes[l]);
  } else {
    // Tokens look like  a.i>b.j  where i or j may be '*'.
    auto endpoint = [&](std::string_view s, const std::string& tok) -> std::pair<Index, std::optional<Index>> {
      const auto dot = s.find('.');
      if (dot == std::string_view::npos) at_edges.fail("malformed edge '" + tok + "'");
      const auto layer = parse_index(s.substr(0, dot));
      const auto idx_s = s.substr(dot + 1);
      if (!layer || *layer < 0 || *layer >= static_cast<Index>(sizes.size())) {
        at_edges.fail("edge '" + tok + "' names a missing layer");
      }
      if (idx_s == "*") return {*layer, std::nullopt};
      const auto idx = parse_index(idx_s);
      if (!idx || *idx < 0 || *idx >= sizes[static_cast<std::size_t>(*layer)]) {
        at_edges.fail("edge '" + tok + "' names a missing node");
      }
      return {*layer, idx};
    };
    for (const auto& tok : split_tokens(eit->second.body)) {
      const auto gt = tok.find('>');
      if (gt == std::string::npos) at_edges.fail("malformed edge '" + tok + "'");
      const auto [ls, is] = endpoint(std::string_view(tok).substr(0, gt), tok);
      const auto [ld, id] = endpoint(std::string_view(tok).substr(gt + 1), tok);
      if (ld != ls + 1) at_edges.fail("non-adjacent edge '" + tok + "'");
      auto& bucket = edges[static_cast<std::size_t>(ld)];
      for (Index s = is.value_or(0); s < (is ? *is + 1 : sizes[static_cast<std::size_t>(ls)]); ++s) {
        for (Index d = id.value_or(0); d < (id ? *id + 1 : sizes[static_cast<std::size_t>(ld)]); ++d) {
          const SkeletonEdge e{s, d};
          if (std::find(bucket.begin(), bucket.end(), e) != bucket.end()) {
            at_edges.fail("duplicate edge " + node_name(ls, s) + ">" + node_name(ld, d));
          }
          bucket.push_back(e);
        }
      }
    }
  }
  for (auto& e : edges) std::sort(e.begin(), e.end());
  const std::string problem = structure_problem(layers, edges);
  if (!problem.empty()) at_edges.fail(problem);
  return Skeleton(std::move(layers), std::move(edges));
}

std::string serialize_skeleton(const Skeleton& s) {
  std::ostringstream out;
  out << "version = 1\nlayers = [";
  for (Index l = 0; l <= s.depth(); ++l) out << (l ? ", " : "") << s.layer_size(l);
  out << "]\n";

  auto per_node = [&](const char* key, auto&& token) {
    out << key << " = [";
    for (Index l = 0; l <= s.depth(); ++l) {
      if (l) out << " | ";
      std::vector<std::string> toks;
      for (Index i = 0; i < s.layer_size(l); ++i) toks.push_back(token(l, s.node(l, i)));
      const bool uniform = std::all_of(toks.begin(), toks.end(), [&](const auto& t) { return t == toks[0]; });
      if (uniform) {
        out << toks[0];
      } else {
        for (std::size_t i = 0; i < toks.size(); ++i) out << (i ? ", " : "") << toks[i];
      }
    }
    out << "]\n";
  };
  per_node("activations",
           [](Index l, const SkeletonNode& n) { return l == 0 ? std::string("-") : std::string(to_string(n.activation)); });
  per_node("widths", [](Index, const SkeletonNode& n) { return std::to_string(n.width); });

  std::vector<std::string> toks;
  for (Index l = 1; l <= s.depth(); ++l) {
    const Index n_src = s.layer_size(l - 1);
    if (static_cast<Index>(s.edges(l).size()) == n_src * s.layer_size(l)) {
      toks.push_back(std::to_string(l - 1) + ".*>" + std::to_string(l) + ".*");
      continue;
    }
    for (Index d = 0; d < s.layer_size(l); ++d) {
      const auto in = s.incoming(l, d);
      if (static_cast<Index>(in.size()) == n_src) {
        toks.push_back(std::to_string(l - 1) + ".*>" + node_name(l, d));
      } else {
        for (Index src : in) toks.push_back(node_name(l - 1, src) + ">" + node_name(l, d));
      }
    }
  }
  out << "edges = [";
  for (std::size_t i = 0; i < toks.size(); ++i) out << (i ? ", " : "") << toks[i];
  out << "]\n";
  return out.str();
}

Skeleton chain_skeleton(Index depth, Index inputs, Activation hidden) {
  if (depth < 1 || inputs < 1) throw SkeletonError("chain: depth and inputs must be positive");
  std::vector<std::vector<SkeletonNode>> layers(static_cast<std::size_t>(depth + 1));
  std::vector<std::vector<SkeletonEdge>> edges(layers.size());
  layers[0].assign(static_cast<std::size_t>(inputs), SkeletonNode{Activation::Identity, 1});
  for (Index l = 1; l <= depth; ++l) {
    layers[static_cast<std::size_t>(l)] = {l == depth ? SkeletonNode{Activation::Identity, 1} : SkeletonNode{hidden, 2}};
    edges[static_cast<std::size_t>(l)] = complete_edges(l == 1 ? inputs : 1, 1);
  }
  return Skeleton(std::move(layers), std::move(edges));
}

Skeleton multitask_skeleton(Index shared, Index tasks, Index inputs, Activation hidden) {
  if (shared < 1 || tasks < 1 || inputs < 1) throw SkeletonError("multitask: counts must be positive");
  std::vector<std::vector<SkeletonNode>> layers(3);
  layers[0].assign(static_cast<std::size_t>(inputs), SkeletonNode{Activation::Identity, 1});
  layers[1].assign(static_cast<std::size_t>(shared), SkeletonNode{hidden, 2});
  layers[2].assign(static_cast<std::size_t>(tasks), SkeletonNode{Activation::Identity, 1});
  std::vector<std::vector<SkeletonEdge>> edges{{}, complete_edges(inputs, shared), complete_edges(shared, tasks)};
  return Skeleton(std::move(layers), std::move(edges));
}

Skeleton additive_skeleton(Index k, const std::vector<std::vector<Index>>& groups, const AdditiveOptions& options) {
  if (k < 1) throw SkeletonError("additive: k must be positive");
  if (options.inputs < 1 || options.branch_depth < 1) throw SkeletonError("additive: inputs and depth must be positive");
  if (!groups.empty() && static_cast<Index>(groups.size()) != k) {
    throw SkeletonError("additive: expected " + std::to_string(k) + " groups, got " + std::to_string(groups.size()));
  }
  const std::size_t nw = options.widths.size();
  if (nw != 1 && nw != static_cast<std::size_t>(options.branch_depth)) {
    throw SkeletonError("additive: widths must have 1 or branch_depth entries");
  }
  const Index depth = options.branch_depth + 1;
  std::vector<std::vector<SkeletonNode>> layers(static_cast<std::size_t>(depth + 1));
  std::vector<std::vector<SkeletonEdge>> edges(layers.size());
  layers[0].assign(static_cast<std::size_t>(options.inputs), SkeletonNode{Activation::Identity, 1});
  for (Index l = 1; l < depth; ++l) {
    const Index w = options.widths[nw == 1 ? 0 : static_cast<std::size_t>(l - 1)];
    layers[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(k), SkeletonNode{options.hidden, w});
  }
  layers.back() = {SkeletonNode{Activation::Identity, 1}};
  for (Index j = 0; j < k; ++j) {
    if (groups.empty()) {
      for (Index s = 0; s < options.inputs; ++s) edges[1].push_back({s, j});
    } else {
      const auto& g = groups[static_cast<std::size_t>(j)];
      if (g.empty()) throw SkeletonError("additive: group " + std::to_string(j) + " is empty");
      for (Index s : g) {
        if (s < 0 || s >= options.inputs) throw SkeletonError("additive: group input " + std::to_string(s) + " out of range");
        edges[1].push_back({s, j});
      }
    }
    for (Index l = 2; l < depth; ++l) edges[static_cast<std::size_t>(l)].push_back({j, j});
    edges[static_cast<std::size_t>(depth)].push_back({j, 0});
  }
  return Skeleton(std::move(layers), std::move(edges));
}

Index hidden_components(const Skeleton& s) {
  // Union-find over nodes in layers 1..depth-1.
  std::vector<Index> offset(static_cast<std::size_t>(s.depth() + 1), 0);
  Index total = 0;
  for (Index l = 1; l < s.depth(); ++l) {
    offset[static_cast<std::size_t>(l)] = total;
    total += s.layer_size(l);
  }
  std::vector<Index> parent(static_cast<std::size_t>(total));
  std::iota(parent.begin(), parent.end(), Index{0});
  auto find = [&](Index x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    return x;
  };
  for (Index l = 2; l < s.depth(); ++l) {
    for (const auto& e : s.edges(l)) {
      const Index a = find(offset[static_cast<std::size_t>(l - 1)] + e.src);
      const Index b = find(offset[static_cast<std::size_t>(l)] + e.dst);
      parent[static_cast<std::size_t>(a)] = b;
    }
  }
  std::set<Index> roots;
  for (Index x = 0; x < total; ++x) roots.insert(find(x));
  return static_cast<Index>(roots.size());
}

}  // namespace bnnblocks
