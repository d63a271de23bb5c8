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
#include "bnnblocks/model_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace bnnblocks {
namespace {

constexpr int kFormat = 1;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

std::string matrix_bytes(const Matrix& m) {
  std::string out;
  put_u64(out, static_cast<std::uint64_t>(m.rows()));
  put_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::uint64_t bits;
      const double v = m(i, j);
      std::memcpy(&bits, &v, sizeof bits);
      put_u64(out, bits);
    }
  }
  return out;
}

class BlobReader {
 public:
  explicit BlobReader(std::string_view data) : data_(data) {}

  Matrix next(const std::string& what) {
    const auto rows = u64(what);
    const auto cols = u64(what);
    if (rows > (1u << 30) || cols > (1u << 30)) throw ModelFormatError("model blob: implausible shape for " + what);
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) {
        const std::uint64_t bits = u64(what);
        double v;
        std::memcpy(&v, &bits, sizeof v);
        m(i, j) = v;
      }
    }
    return m;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  std::uint64_t u64(const std::string& what) {
    if (pos_ + 8 > data_.size()) throw ModelFormatError("model blob: truncated while reading " + what);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + b])) << (8 * b);
    pos_ += 8;
    return v;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

FamilyKind parse_family(const std::string& s) {
  if (s == "gaussian") return FamilyKind::Gaussian;
  if (s == "point-mass") return FamilyKind::PointMass;
  if (s == "mixture") return FamilyKind::Mixture;
  throw ModelFormatError("model: unknown family '" + s + "'");
}

PriorKind parse_prior(const std::string& s) {
  if (s == "standard-normal") return PriorKind::StandardNormal;
  if (s == "group-lasso") return PriorKind::GroupLasso;
  throw ModelFormatError("model: unknown prior '" + s + "'");
}

// "key=value" tokens after the leading words of a node/stage line.
std::map<std::string, std::string> fields(std::istringstream& in) {
  std::map<std::string, std::string> out;
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ModelFormatError("model: expected key=value, got '" + tok + "'");
    out[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return out;
}

const std::string& need(const std::map<std::string, std::string>& m, const std::string& key, const std::string& line) {
  const auto it = m.find(key);
  if (it == m.end()) throw ModelFormatError("model: missing '" + key + "' in line '" + line + "'");
  return it->second;
}

std::vector<std::pair<std::string, std::string>> config_pairs(const AddnnConfig& c) {
  return {{"subnets", std::to_string(c.subnets)},
          {"width1", std::to_string(c.width1)},
          {"width2", std::to_string(c.width2)},
          {"hidden", std::string(to_string(c.hidden))},
          {"variant", std::string(to_string(c.variant))},
          {"lambda", fmt(c.lambda)},
          {"keep_prob", fmt(c.keep_prob)},
          {"features", std::to_string(c.features)},
          {"init_std", fmt(c.init_std)},
          {"steps", std::to_string(c.train.steps)},
          {"batch", std::to_string(c.train.batch)},
          {"lr", fmt(c.train.lr)},
          {"decay_rate", fmt(c.train.decay_rate)},
          {"decay_steps", std::to_string(c.train.decay_steps)},
          {"mc_samples", std::to_string(c.train.mc_samples)},
          {"train_seed", std::to_string(c.train.seed)},
          {"lasso_warmup", std::to_string(c.train.lasso_warmup)}};
}

void set_config(AddnnConfig& c, const std::string& key, const std::string& v) {
  if (key == "subnets") c.subnets = std::stoll(v);
  else if (key == "width1") c.width1 = std::stoll(v);
  else if (key == "width2") c.width2 = std::stoll(v);
  else if (key == "hidden") c.hidden = parse_activation(v);
  else if (key == "variant") c.variant = parse_variant(v);
  else if (key == "lambda") c.lambda = std::stod(v);
  else if (key == "keep_prob") c.keep_prob = std::stod(v);
  else if (key == "features") c.features = std::stoll(v);
  else if (key == "init_std") c.init_std = std::stod(v);
  else if (key == "steps") c.train.steps = std::stoll(v);
  else if (key == "batch") c.train.batch = std::stoll(v);
  else if (key == "lr") c.train.lr = std::stod(v);
  else if (key == "decay_rate") c.train.decay_rate = std::stod(v);
  else if (key == "decay_steps") c.train.decay_steps = std::stoll(v);
  else if (key == "mc_samples") c.train.mc_samples = std::stoll(v);
  else if (key == "train_seed") c.train.seed = std::stoull(v);
  else if (key == "lasso_warmup") c.train.lasso_warmup = std::stoll(v);
  else throw ModelFormatError("model: unknown config key '" + key + "'");
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t matrix_checksum(const Matrix& m) { return fnv1a64(matrix_bytes(m)); }

std::string model_blob(const SavedModel& sm) {
  const AddnnModel& m = sm.model;
  std::string out;
  out += matrix_bytes(m.x_mean);
  out += matrix_bytes(m.x_std);
  Matrix ys(1, 2);
  ys << m.y_mean, m.y_std;
  out += matrix_bytes(ys);
  for (const auto& layer : m.net.nodes()) {
    for (const auto& n : layer) {
      for (const auto& b : n.features) {
        if (b.kind == StageKind::RB) {
          out += matrix_bytes(b.rb.weights());
          out += matrix_bytes(b.rb.bias());
        } else {
          out += matrix_bytes(b.ipb.inducing_points());
        }
      }
    }
  }
  const VariationalState& q = m.state;
  for (std::size_t g = 0; g < q.mean.size(); ++g) {
    out += matrix_bytes(q.mean[g]);
    out += matrix_bytes(q.log_std[g]);
    for (const auto& c : q.chol[g]) out += matrix_bytes(c);
    out += matrix_bytes(q.bias[g]);
  }
  out += matrix_bytes(q.log_noise_var);
  return out;
}

std::string model_text(const SavedModel& sm, const std::string& blob_name, const std::string& blob) {
  const AddnnModel& m = sm.model;
  const BayesNet& net = m.net;
  const VariationalState& q = m.state;
  std::ostringstream out;
  out << "# bnnblocks model\n";
  out << "format = " << kFormat << "\n";
  out << "preset = " << sm.preset << "\n";
  out << "target = " << sm.target_name << "\n";
  for (const auto& f : sm.feature_names) out << "feature = " << f << "\n";
  out << "bias = " << to_string(net.bias_mode()) << "\n";
  out << "seed = " << net.seed() << "\n";
  out << "likelihood = " << (q.likelihood.kind == LikelihoodKind::Gaussian ? "gaussian" : "softmax") << "\n";
  out << "classes = " << q.likelihood.classes << "\n";
  out << "initial_noise_var = " << fmt(q.likelihood.noise_var) << "\n";
  out << "train_noise = " << (q.likelihood.train_noise ? 1 : 0) << "\n";
  if (sm.preset == "addnn") {
    for (const auto& [k, v] : config_pairs(m.config)) out << "config." << k << " = " << v << "\n";
  }
  out << "blob = " << blob_name << "\n";
  out << "blob_bytes = " << blob.size() << "\n";
  out << "blob_fnv1a64 = " << hex(fnv1a64(blob)) << "\n";
  out << "[skeleton]\n" << serialize_skeleton(net.skeleton()) << "[end]\n";
  for (Index l = 1; l <= net.depth(); ++l) {
    for (Index i = 0; i < net.skeleton().layer_size(l); ++i) {
      const NetworkNode& n = net.node(l, i);
      const auto g = static_cast<std::size_t>(n.fb.group);
      const GroupFamily& fam = q.family[g];
      out << "node " << l << " " << i << " recipe=" << format_recipe(net.policy().nodes[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)])
          << " group=" << n.fb.group << " r=" << n.fb.r << " d=" << n.fb.d << " family=" << to_string(fam.kind)
          << " full=" << (fam.full_covariance ? 1 : 0) << " keep=" << fmt(fam.keep_prob)
          << " prior=" << to_string(q.prior[g].kind) << " lambda=" << fmt(q.prior[g].lambda)
          << " mean_fnv1a64=" << hex(matrix_checksum(q.mean[g])) << "\n";
      for (std::size_t s = 0; s < n.features.size(); ++s) {
        const FeatureBlock& b = n.features[s];
        out << "stage " << l << " " << i << " " << s;
        if (b.kind == StageKind::RB) {
          out << " kind=rb d_in=" << b.rb.input_dim() << " r=" << b.rb.feature_count()
              << " sigma=" << to_string(b.rb.activation()) << " rho=" << fmt(b.rb.rho()) << " seed=" << b.rb.seed()
              << " random_bias=" << (b.rb.bias().size() ? 1 : 0) << " w_fnv1a64=" << hex(matrix_checksum(b.rb.weights()))
              << "\n";
        } else {
          out << " kind=ipb d_in=" << b.ipb.input_dim() << " r=" << b.ipb.feature_count()
              << " kernel=" << to_string(b.ipb.kernel()) << " jitter=" << fmt(b.ipb.jitter())
              << " offset=" << (b.offset ? 1 : 0) << " z_fnv1a64=" << hex(matrix_checksum(b.ipb.inducing_points()))
              << "\n";
        }
      }
    }
  }
  return out.str();
}

void save_model(const SavedModel& m, const std::string& stem) {
  const std::string blob = model_blob(m);
  const std::string blob_path = stem + ".bin";
  const auto slash = blob_path.find_last_of('/');
  const std::string blob_name = slash == std::string::npos ? blob_path : blob_path.substr(slash + 1);
  const std::string text = model_text(m, blob_name, blob);
  std::ofstream b(blob_path, std::ios::binary);
  if (!b) throw Error("cannot write '" + blob_path + "'");
  b.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  std::ofstream t(stem + ".txt");
  if (!t) throw Error("cannot write '" + stem + ".txt'");
  t << text;
  if (!b || !t) throw Error("write failed for model '" + stem + "'");
}

namespace {

SavedModel parse_model_fields(std::string_view text, std::string_view blob) {
  SavedModel sm;
  std::map<std::string, std::string> kv;
  std::string skeleton_text;
  struct NodeLine {
    Index l, i;
    std::map<std::string, std::string> f;
    std::string raw;
  };
  struct StageLine {
    Index l, i, s;
    std::map<std::string, std::string> f;
    std::string raw;
  };
  std::vector<NodeLine> node_lines;
  std::vector<StageLine> stage_lines;
  std::vector<std::pair<std::string, std::string>> config;

  std::istringstream in{std::string(text)};
  std::string line;
  bool in_skeleton = false;
  while (std::getline(in, line)) {
    if (in_skeleton) {
      if (line == "[end]") {
        in_skeleton = false;
      } else {
        skeleton_text += line + "\n";
      }
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    if (line == "[skeleton]") {
      in_skeleton = true;
      continue;
    }
    std::istringstream ls(line);
    std::string head;
    ls >> head;
    if (head == "node") {
      NodeLine n;
      ls >> n.l >> n.i;
      if (!ls) throw ModelFormatError("model: bad node line '" + line + "'");
      n.f = fields(ls);
      n.raw = line;
      node_lines.push_back(std::move(n));
      continue;
    }
    if (head == "stage") {
      StageLine st;
      ls >> st.l >> st.i >> st.s;
      if (!ls) throw ModelFormatError("model: bad stage line '" + line + "'");
      st.f = fields(ls);
      st.raw = line;
      stage_lines.push_back(std::move(st));
      continue;
    }
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw ModelFormatError("model: cannot parse line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (key == "feature") {
      sm.feature_names.push_back(value);
    } else if (key.rfind("config.", 0) == 0) {
      config.emplace_back(key.substr(7), value);
    } else {
      kv[key] = value;
    }
  }
  if (in_skeleton) throw ModelFormatError("model: unterminated [skeleton] section");
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ModelFormatError("model: missing '" + key + "'");
    return it->second;
  };
  if (std::stoi(get("format")) != kFormat) throw ModelFormatError("model: unsupported format " + get("format"));
  if (std::stoull(get("blob_bytes")) != blob.size()) {
    throw ModelFormatError("model: blob has " + std::to_string(blob.size()) + " bytes, manifest says " + get("blob_bytes"));
  }
  if (hex(fnv1a64(blob)) != get("blob_fnv1a64")) throw ModelFormatError("model: blob checksum mismatch");

  sm.preset = get("preset");
  sm.target_name = get("target");
  AddnnModel& m = sm.model;
  for (const auto& [k, v] : config) set_config(m.config, k, v);

  const Skeleton skeleton = parse_skeleton(skeleton_text);
  BuildOptions options;
  options.bias = parse_bias_mode(get("bias"));
  options.seed = std::stoull(get("seed"));

  BlobReader blob_in(blob);
  m.x_mean = blob_in.next("x_mean");
  m.x_std = blob_in.next("x_std");
  const Matrix ys = blob_in.next("y stats");
  if (ys.rows() != 1 || ys.cols() != 2) throw ModelFormatError("model blob: bad target statistics");
  m.y_mean = ys(0, 0);
  m.y_std = ys(0, 1);

  FeaturePolicy policy;
  policy.nodes.resize(static_cast<std::size_t>(skeleton.depth() + 1));
  std::vector<std::vector<NetworkNode>> nodes(static_cast<std::size_t>(skeleton.depth() + 1));
  Weights init;
  std::size_t stage_pos = 0;
  std::vector<GroupFamily> family;
  std::vector<GroupPrior> prior;
  std::size_t node_pos = 0;
  for (Index l = 1; l <= skeleton.depth(); ++l) {
    for (Index i = 0; i < skeleton.layer_size(l); ++i) {
      if (node_pos >= node_lines.size() || node_lines[node_pos].l != l || node_lines[node_pos].i != i) {
        throw ModelFormatError("model: missing node line for " + std::to_string(l) + "." + std::to_string(i));
      }
      const NodeLine& nl = node_lines[node_pos++];
      policy.nodes[static_cast<std::size_t>(l)].push_back(parse_recipe(need(nl.f, "recipe", nl.raw)));
      NetworkNode n;
      n.layer = l;
      n.index = i;
      n.inputs = skeleton.incoming(l, i);
      n.activation = skeleton.node(l, i).activation;
      while (stage_pos < stage_lines.size() && stage_lines[stage_pos].l == l && stage_lines[stage_pos].i == i) {
        const StageLine& sl = stage_lines[stage_pos++];
        FeatureBlock b;
        const std::string& kind = need(sl.f, "kind", sl.raw);
        const std::string where = "stage " + std::to_string(l) + "." + std::to_string(i) + ":" + std::to_string(sl.s);
        if (kind == "rb") {
          b.kind = StageKind::RB;
          Matrix w = blob_in.next(where + " weights");
          Matrix bias = blob_in.next(where + " bias");
          if (hex(matrix_checksum(w)) != need(sl.f, "w_fnv1a64", sl.raw)) {
            throw ModelFormatError("model: checksum mismatch for " + where + " weights");
          }
          const auto sigma = parse_activation(need(sl.f, "sigma", sl.raw));
          const double rho = std::stod(need(sl.f, "rho", sl.raw));
          const auto seed = std::stoull(need(sl.f, "seed", sl.raw));
          const RandomFeatureBlock regen(w.rows(), w.cols(), sigma, seed, rho, bias.size() > 0);
          if (regen.weights() != w) throw ModelFormatError("model: " + where + " weights do not match their seed");
          b.rb = RandomFeatureBlock(std::move(w), Vector(bias.reshaped()), sigma, seed, rho);
        } else if (kind == "ipb") {
          b.kind = StageKind::IPB;
          Matrix z = blob_in.next(where + " inducing points");
          if (hex(matrix_checksum(z)) != need(sl.f, "z_fnv1a64", sl.raw)) {
            throw ModelFormatError("model: checksum mismatch for " + where + " inducing points");
          }
          b.ipb = InducingPointBlock(parse_kernel(need(sl.f, "kernel", sl.raw)), std::move(z),
                                     std::stod(need(sl.f, "jitter", sl.raw)));
          b.offset = need(sl.f, "offset", sl.raw) == "1";
        } else {
          throw ModelFormatError("model: unknown stage kind '" + kind + "'");
        }
        n.features.push_back(std::move(b));
      }
      n.fb = FunctionBlock{std::stoll(need(nl.f, "r", nl.raw)), std::stoll(need(nl.f, "d", nl.raw)),
                           std::stoll(need(nl.f, "group", nl.raw))};
      GroupFamily fam;
      fam.kind = parse_family(need(nl.f, "family", nl.raw));
      fam.full_covariance = need(nl.f, "full", nl.raw) == "1";
      fam.keep_prob = std::stod(need(nl.f, "keep", nl.raw));
      family.push_back(fam);
      prior.push_back(GroupPrior{parse_prior(need(nl.f, "prior", nl.raw)), std::stod(need(nl.f, "lambda", nl.raw))});
      CounterRng rng(options.seed, (std::uint64_t{1} << 62) | static_cast<std::uint64_t>(n.fb.group));
      init.v.push_back(rng.normal_matrix(n.fb.r, n.fb.d) / std::sqrt(static_cast<double>(n.fb.r)));
      init.bias.push_back(options.bias == BiasMode::TrainableInFB ? Matrix(Matrix::Zero(1, n.fb.d)) : Matrix());
      nodes[static_cast<std::size_t>(l)].push_back(std::move(n));
    }
  }
  if (node_pos != node_lines.size() || stage_pos != stage_lines.size()) {
    throw ModelFormatError("model: node or stage lines do not match the skeleton");
  }
  m.net = BayesNet(skeleton, policy, options, std::move(nodes), std::move(init));

  VariationalState& q = m.state;
  q.family = family;
  q.prior = prior;
  q.likelihood.kind = get("likelihood") == "softmax" ? LikelihoodKind::Softmax : LikelihoodKind::Gaussian;
  q.likelihood.classes = std::stoll(get("classes"));
  q.likelihood.noise_var = std::stod(get("initial_noise_var"));
  q.likelihood.train_noise = get("train_noise") == "1";
  for (Index g = 0; g < m.net.group_count(); ++g) {
    const auto gi = static_cast<std::size_t>(g);
    const std::string where = "group " + std::to_string(g);
    q.mean.push_back(blob_in.next(where + " mean"));
    if (hex(matrix_checksum(q.mean.back())) != need(node_lines[gi].f, "mean_fnv1a64", node_lines[gi].raw)) {
      throw ModelFormatError("model: checksum mismatch for " + where + " mean");
    }
    q.log_std.push_back(blob_in.next(where + " log_std"));
    std::vector<Matrix> chol;
    if (family[gi].kind == FamilyKind::Gaussian && family[gi].full_covariance) {
      for (Index k = 0; k < q.mean.back().cols(); ++k) chol.push_back(blob_in.next(where + " factor"));
    }
    q.chol.push_back(std::move(chol));
    q.bias.push_back(blob_in.next(where + " bias"));
    const NetworkNode& n = m.net.group_node(g);
    if (q.mean.back().rows() != n.fb.r || q.mean.back().cols() != n.fb.d) {
      throw ModelFormatError("model: " + where + " mean has shape " + shape_string(q.mean.back().rows(), q.mean.back().cols()) +
                             ", expected " + shape_string(n.fb.r, n.fb.d));
    }
  }
  q.log_noise_var = blob_in.next("log noise variance");
  if (!blob_in.done()) throw ModelFormatError("model blob: trailing bytes");
  return sm;
}

}  // namespace

SavedModel parse_model(std::string_view text, std::string_view blob) {
  try {
    return parse_model_fields(text, blob);
  } catch (const std::logic_error& e) {
    // std::stoull and friends on malformed numbers
    throw ModelFormatError(std::string("model: malformed numeric field (") + e.what() + ")");
  }
}

SavedModel load_model(const std::string& stem) {
  auto slurp = [](const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read '" + path + "'");
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
  };
  const std::string text = slurp(stem + ".txt");
  std::string blob_name = stem + ".bin";
  // The manifest names its blob relative to its own directory.
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("blob = ", 0) == 0) {
      const auto slash = stem.find_last_of('/');
      blob_name = (slash == std::string::npos ? std::string() : stem.substr(0, slash + 1)) + line.substr(7);
    }
  }
  return parse_model(text, slurp(blob_name));
}

}  // namespace bnnblocks
