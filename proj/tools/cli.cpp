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
#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "bnnblocks/addnn.hpp"
#include "bnnblocks/bench.hpp"
#include "bnnblocks/kernels.hpp"
#include "bnnblocks/model_io.hpp"
#include "bnnblocks/skeleton.hpp"

namespace bnnblocks::cli {
namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read '" + path + "'");
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

/// Output directory that refuses to overwrite any input of the run.
class Outputs {
 public:
  void set_dir(const std::string& dir) { dir_ = dir; }
  void add_input(const std::string& path) { inputs_.push_back(path); }

  fs::path path(const std::string& name) const { return fs::path(dir_) / name; }

  void write(const std::string& name, const std::string& content) const {
    const fs::path p = path(name);
    fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
    for (const auto& in : inputs_) {
      std::error_code ec;
      if (fs::exists(p) && fs::equivalent(p, in, ec)) throw Error("refusing to overwrite input file '" + in + "'");
    }
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("cannot write '" + p.string() + "'");
    f << content;
    if (!f) throw Error("write failed for '" + p.string() + "'");
  }

  void check_model_stem(const std::string& stem) const {
    for (const char* ext : {".txt", ".bin"}) {
      for (const auto& in : inputs_) {
        std::error_code ec;
        const fs::path p = stem + ext;
        if (fs::exists(p) && fs::equivalent(p, in, ec)) throw Error("refusing to overwrite input file '" + in + "'");
      }
    }
  }

 private:
  std::string dir_ = "out";
  std::vector<std::string> inputs_;
};

std::string metrics_csv(const std::vector<std::pair<std::string, double>>& rows) {
  std::ostringstream out;
  out << "metric,value\n";
  for (const auto& [k, v] : rows) out << k << "," << fmt(v) << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Shared option groups

struct DataOptions {
  int fid = 0;
  std::string data;
  std::string test;
  std::string target = "y";
  Index n_train = 5000;
  Index n_test = 5000;
  double noise_var = 1.0;
  std::uint64_t data_seed = 1;
};

void add_data_options(CLI::App* sub, DataOptions& d, bool with_test) {
  auto* fid = sub->add_option("--fid", d.fid, "Synthetic function 1-4 instead of a CSV file")->check(CLI::Range(1, 4));
  auto* data = sub->add_option("--data", d.data, "Training CSV (header row required)")->check(CLI::ExistingFile);
  fid->excludes(data);
  sub->add_option("--target", d.target, "Target column of the CSV files")->capture_default_str();
  sub->add_option("--n-train", d.n_train, "Synthetic training rows")->capture_default_str();
  sub->add_option("--noise-var", d.noise_var, "Synthetic noise variance")->capture_default_str();
  sub->add_option("--data-seed", d.data_seed, "Seed of the synthetic data")->capture_default_str();
  if (with_test) {
    auto* test = sub->add_option("--test", d.test, "Test CSV")->check(CLI::ExistingFile);
    test->needs(data);
    sub->add_option("--n-test", d.n_test, "Synthetic test rows")->capture_default_str();
  }
}

struct LoadedData {
  Dataset train;
  std::optional<Dataset> test;
};

LoadedData load_data(const DataOptions& d, Outputs& out, bool want_test) {
  LoadedData ld;
  if (d.fid > 0) {
    ld.train = generate_synthetic(d.fid, d.n_train, d.noise_var, d.data_seed, 0);
    if (want_test) ld.test = generate_synthetic(d.fid, d.n_test, d.noise_var, d.data_seed, 1);
  } else if (!d.data.empty()) {
    out.add_input(d.data);
    ld.train = ingest_csv(d.data, d.target, false);
    if (want_test && !d.test.empty()) {
      out.add_input(d.test);
      ld.test = ingest_csv(d.test, d.target, false);
      if (ld.test->feature_names != ld.train.feature_names) throw Error("test CSV columns differ from the training CSV");
    }
  } else {
    throw Error("no data: pass --fid or --data");
  }
  return ld;
}

struct TrainOptions {
  std::string preset = "addnn";
  std::string variant = "mcdropout";
  AddnnConfig addnn;
  std::string skeleton;
  std::string recipe = "fb";
  std::string output_recipe = "fb";
  std::string family = "gaussian";
  std::string prior = "standard-normal";
  double keep_prob = 0.9;
  std::string bias = "trainable-in-fb";
};

void add_train_options(CLI::App* sub, TrainOptions& t, bool with_preset) {
  AddnnConfig& c = t.addnn;
  if (with_preset) {
    sub->add_option("--preset", t.preset, "Model preset")->check(CLI::IsMember({"addnn", "bnn"}))->capture_default_str();
    sub->add_option("--skeleton", t.skeleton, "Skeleton file (bnn preset)")->check(CLI::ExistingFile);
    sub->add_option("--recipe", t.recipe, "Hidden-node recipe (bnn preset), e.g. rb:32:relu+fb")->capture_default_str();
    sub->add_option("--output-recipe", t.output_recipe, "Output-node recipe (bnn preset)")->capture_default_str();
    sub->add_option("--family", t.family, "Variational family (bnn preset)")
        ->check(CLI::IsMember({"gaussian", "gaussian-full", "point-mass", "mixture"}))
        ->capture_default_str();
    sub->add_option("--prior", t.prior, "Prior (bnn preset)")
        ->check(CLI::IsMember({"standard-normal", "group-lasso"}))
        ->capture_default_str();
    sub->add_option("--bias", t.bias, "Bias mode (bnn preset)")
        ->check(CLI::IsMember({"none", "random-in-rb", "trainable-in-fb"}))
        ->capture_default_str();
  }
  sub->add_option("--variant", t.variant, "Uncertainty variant (addnn preset)")
      ->check(CLI::IsMember({"mcdropout", "rf", "dkl", "drf"}))
      ->capture_default_str();
  sub->add_option("--subnets", c.subnets, "Sub-networks")->capture_default_str();
  sub->add_option("--width1", c.width1, "First hidden width per sub-network")->capture_default_str();
  sub->add_option("--width2", c.width2, "Second hidden width per sub-network")->capture_default_str();
  sub->add_option("--lambda", c.lambda, "Group-lasso strength (full-data ELBO units)")->capture_default_str();
  sub->add_option("--keep-prob", c.keep_prob, "Keep probability of mixture posteriors")->capture_default_str();
  sub->add_option("--features", c.features, "Width of random feature / inducing point blocks")->capture_default_str();
  sub->add_option("--init-std", c.init_std, "Initial posterior standard deviation")->capture_default_str();
  sub->add_option("--steps", c.train.steps, "Optimizer steps")->capture_default_str();
  sub->add_option("--batch", c.train.batch, "Minibatch size")->capture_default_str();
  sub->add_option("--lr", c.train.lr, "Initial learning rate")->capture_default_str();
  sub->add_option("--decay-rate", c.train.decay_rate, "Learning-rate decay factor")->capture_default_str();
  sub->add_option("--decay-steps", c.train.decay_steps, "Steps per decay factor")->capture_default_str();
  sub->add_option("--mc-samples", c.train.mc_samples, "ELBO Monte Carlo samples per step")->capture_default_str();
  sub->add_option("--lasso-warmup", c.train.lasso_warmup, "Steps before the group lasso acts")->capture_default_str();
  sub->add_option("--seed", c.train.seed, "Training seed")->capture_default_str();
}

GroupFamily family_of(const std::string& name, double keep) {
  if (name == "gaussian") return GroupFamily::gaussian();
  if (name == "gaussian-full") return GroupFamily::gaussian(true);
  if (name == "point-mass") return GroupFamily::point_mass();
  return GroupFamily::mixture(keep);
}

/// Generic network on a skeleton file, inputs and target standardized like AddNN.
AddnnModel fit_bnn(const TrainOptions& t, const Matrix& x_raw, const Vector& y_raw, std::vector<TraceRow>& trace) {
  if (t.skeleton.empty()) throw Error("the bnn preset needs --skeleton");
  const Skeleton s = parse_skeleton(read_file(t.skeleton));
  if (s.input_dim() != x_raw.cols()) {
    throw Error("skeleton expects " + std::to_string(s.input_dim()) + " inputs, data has " + std::to_string(x_raw.cols()));
  }
  if (s.output_dim() != 1) throw Error("the bnn preset needs a scalar output");
  AddnnModel m;
  m.config = t.addnn;
  column_stats(x_raw, m.x_mean, m.x_std);
  for (Index j = 0; j < m.x_std.size(); ++j)
    if (m.x_std(j) == 0.0) m.x_std(j) = 1.0;
  m.y_mean = y_raw.mean();
  m.y_std = std::sqrt((y_raw.array() - m.y_mean).square().mean());
  if (m.y_std == 0.0) m.y_std = 1.0;
  const Matrix xs = standardize(x_raw, m.x_mean, m.x_std);
  const Matrix ys = ((y_raw.array() - m.y_mean) / m.y_std).matrix();
  const FeaturePolicy policy = FeaturePolicy::uniform(s, parse_recipe(t.recipe), parse_recipe(t.output_recipe));
  m.net = build_network(s, policy, BuildOptions{parse_bias_mode(t.bias), t.addnn.train.seed, &xs});
  const GroupPrior prior =
      t.prior == "group-lasso" ? GroupPrior::group_lasso(t.addnn.lambda) : GroupPrior::standard_normal();
  m.state = init_state(m.net, family_of(t.family, t.addnn.keep_prob), prior, Likelihood::gaussian(1.0, true),
                       t.addnn.init_std);
  TrainResult res = train(m.net, m.state, xs, ys, t.addnn.train);
  m.state = std::move(res.state);
  trace = std::move(res.trace);
  return m;
}

std::vector<std::pair<std::string, double>> evaluate(const AddnnModel& m, const Dataset& d, Index mc, std::uint64_t seed,
                                                     const std::string& prefix) {
  PredictOptions po;
  po.mc_samples = mc;
  po.seed = seed;
  po.keep_draws = false;
  const Prediction p = predict_addnn(m, raw_features(d), po);
  return {{prefix + "rmse", rmse(p.mean.col(0), d.y)},
          {prefix + "mll", mean_log_likelihood(p.mean.col(0), p.variance.col(0), d.y, m.noise_var())}};
}

std::string clusters_csv(const std::vector<Subset>& clusters) {
  std::ostringstream out;
  out << "subnet,features\n";
  for (std::size_t j = 0; j < clusters.size(); ++j) out << j + 1 << "," << subset_label(clusters[j]) << "\n";
  return out.str();
}

std::vector<std::string> feature_labels(const Dataset& d) {
  if (!d.feature_names.empty()) return d.feature_names;
  std::vector<std::string> names;
  for (Index j = 0; j < d.features(); ++j) names.push_back("x" + std::to_string(j + 1));
  return names;
}

std::string quoted(const std::string& v) {
  return v.find('"') == std::string::npos ? "\"" + v + "\"" : "'" + v + "'";
}

/// Options of the invoked subcommand chain, given values first and defaults after.
/// Options without a value or default are left out so the file re-parses cleanly.
std::string manifest(const CLI::App& app) {
  std::ostringstream out;
  out << "# bnnblocks run; re-run with: bnnblocks --config <this file>\n";
  auto emit = [&out](const CLI::App& a) {
    for (const CLI::Option* opt : a.get_options()) {
      if (!opt->get_configurable() || opt->get_lnames().empty()) continue;
      const std::string& name = opt->get_lnames().front();
      if (name == "help" || name == "config") continue;
      if (opt->count() > 0) {
        const auto& res = opt->results();
        if (res.size() == 1) {
          out << name << "=" << quoted(res[0]) << "\n";
        } else {
          out << name << "=[";
          for (std::size_t i = 0; i < res.size(); ++i) out << (i ? "," : "") << quoted(res[i]);
          out << "]\n";
        }
      } else if (!opt->get_default_str().empty()) {
        out << name << "=" << quoted(opt->get_default_str()) << "\n";
      }
    }
  };
  emit(app);
  std::string section;
  for (const CLI::App* a = &app;;) {
    const auto subs = a->get_subcommands();
    if (subs.empty()) break;
    a = subs.front();
    section += (section.empty() ? "" : ".") + a->get_name();
    out << "[" << section << "]\n";
    emit(*a);
  }
  return out.str();
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Bayesian networks from skeletons: training, additive-model interactions and kernel checks", "bnnblocks"};
  app.set_config("--config", "", "Re-run from a manifest written by an earlier run");
  app.require_subcommand(1);
  app.fallthrough();
  Outputs out;
  std::string out_dir = "out";
  app.add_option("-o,--out-dir", out_dir, "Directory for every artifact of the run")->capture_default_str();

  // skeleton ----------------------------------------------------------------
  auto* sk = app.add_subcommand("skeleton", "Validate a skeleton file or build a preset, and write it back out");
  std::string sk_file, sk_preset;
  Index sk_depth = 3, sk_inputs = 4, sk_shared = 2, sk_tasks = 2, sk_subnets = 10;
  std::string sk_hidden = "relu";
  auto* skf = sk->add_option("--file", sk_file, "Skeleton text file")->check(CLI::ExistingFile);
  auto* skp = sk->add_option("--preset", sk_preset, "Preset skeleton")->check(CLI::IsMember({"chain", "multitask", "additive"}));
  skf->excludes(skp);
  sk->add_option("--depth", sk_depth, "Depth of chain presets")->capture_default_str();
  sk->add_option("--inputs", sk_inputs, "Input features")->capture_default_str();
  sk->add_option("--shared", sk_shared, "Shared layers (multitask)")->capture_default_str();
  sk->add_option("--tasks", sk_tasks, "Tasks (multitask)")->capture_default_str();
  sk->add_option("--subnets", sk_subnets, "Sub-networks (additive)")->capture_default_str();
  sk->add_option("--hidden", sk_hidden, "Hidden activation")->capture_default_str();

  // bench -------------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "Benchmark data and runs");
  bench->require_subcommand(1);
  auto* synth = bench->add_subcommand("synth", "Write synthetic train/test CSV files");
  int syn_fid = 1;
  std::uint64_t syn_seed = 1;
  Index syn_train = 5000, syn_test = 5000;
  double syn_noise = 1.0;
  synth->add_option("--fid", syn_fid, "Synthetic function 1-4")->check(CLI::Range(1, 4))->capture_default_str();
  synth->add_option("--seed", syn_seed, "Data seed")->capture_default_str();
  synth->add_option("--n-train", syn_train, "Training rows")->capture_default_str();
  synth->add_option("--n-test", syn_test, "Test rows")->capture_default_str();
  synth->add_option("--noise-var", syn_noise, "Noise variance")->capture_default_str();

  auto* bcsv = bench->add_subcommand("csv", "Repeated random-split AddNN runs on a CSV dataset");
  std::string bc_data, bc_target = "y";
  Index bc_splits = 20, bc_mc = 100;
  double bc_test_fraction = 0.1;
  std::uint64_t bc_split_seed = 1;
  TrainOptions bc_train;
  bcsv->add_option("--data", bc_data, "CSV file (header row required)")->required()->check(CLI::ExistingFile);
  bcsv->add_option("--target", bc_target, "Target column")->capture_default_str();
  bcsv->add_option("--splits", bc_splits, "Random splits")->capture_default_str();
  bcsv->add_option("--test-fraction", bc_test_fraction, "Held-out fraction per split")->capture_default_str();
  bcsv->add_option("--split-seed", bc_split_seed, "Seed of split s is split-seed + s")->capture_default_str();
  bcsv->add_option("--predict-samples", bc_mc, "Predictive Monte Carlo samples")->capture_default_str();
  add_train_options(bcsv, bc_train, false);

  // train -------------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "Fit a model and write model.txt / model.bin");
  TrainOptions tr_opts;
  DataOptions tr_data;
  Index tr_mc = 100;
  add_train_options(tr, tr_opts, true);
  add_data_options(tr, tr_data, true);
  tr->add_option("--predict-samples", tr_mc, "Predictive Monte Carlo samples for test metrics")->capture_default_str();

  // predict -----------------------------------------------------------------
  auto* pr = app.add_subcommand("predict", "Predictive mean and variance of a saved model");
  std::string pr_model;
  DataOptions pr_data;
  Index pr_mc = 100;
  std::uint64_t pr_seed = 0;
  int pr_part = 1;
  pr->add_option("--model", pr_model, "Model path without extension (e.g. out/model)")->required();
  add_data_options(pr, pr_data, false);
  pr->add_option("--part", pr_part, "Synthetic part: 0 = training draw, 1 = test draw")->capture_default_str();
  pr->add_option("--mc-samples", pr_mc, "Monte Carlo samples")->capture_default_str();
  pr->add_option("--seed", pr_seed, "Sampling seed")->capture_default_str();

  // interactions ------------------------------------------------------------
  auto* ia = app.add_subcommand("interactions", "Interaction strengths and heatmaps of a saved AddNN model");
  std::string ia_model;
  DataOptions ia_data;
  double ia_fraction = 0.01;
  std::optional<double> ia_absolute;
  StrengthOptions ia_opts;
  Index ia_cap = 100000;
  ia->add_option("--model", ia_model, "Model path without extension")->required();
  add_data_options(ia, ia_data, false);
  ia->add_option("--threshold", ia_fraction, "Cluster threshold as a fraction of the largest group norm")
      ->capture_default_str();
  ia->add_option("--absolute-threshold", ia_absolute, "Absolute cluster threshold (overrides --threshold)");
  ia->add_option("--mc-draws", ia_opts.mc_draws, "Posterior draws")->capture_default_str();
  ia->add_option("--top-k", ia_opts.top_k, "Keep the top k entries (0 = all)")->capture_default_str();
  ia->add_option("--max-order", ia_opts.max_order, "Largest interaction order (0 = cluster size)")->capture_default_str();
  ia->add_option("--eval-points", ia_opts.eval_points, "Evaluation points")->capture_default_str();
  ia->add_option("--background-points", ia_opts.background_points, "Background sample size")->capture_default_str();
  ia->add_option("--heatmap-pairs", ia_opts.heatmap_pairs, "Strongest pairs that get a heatmap")->capture_default_str();
  ia->add_option("--grid", ia_opts.heatmap_grid, "Heatmap grid size per axis")->capture_default_str();
  ia->add_option("--seed", ia_opts.seed, "Seed")->capture_default_str();
  ia->add_option("--budget-cap", ia_cap, "Largest number of candidate subsets")->capture_default_str();

  // kernel-check ------------------------------------------------------------
  auto* kc = app.add_subcommand("kernel-check", "Random feature kernel concentration versus r");
  ConcentrationConfig kc_cfg;
  std::string kc_sigma = "relu";
  kc->add_option("--sigma", kc_sigma, "Activation")->check(CLI::IsMember({"relu", "tanh", "erf", "identity", "sigmoid"}))
      ->capture_default_str();
  kc->add_option("--r", kc_cfg.r_grid, "Feature counts")->delimiter(',')->capture_default_str();
  kc->add_option("--d", kc_cfg.d, "Input dimension")->capture_default_str();
  kc->add_option("--pairs", kc_cfg.n_pairs, "Input pairs")->capture_default_str();
  kc->add_option("--seeds", kc_cfg.seeds, "Feature seeds")->delimiter(',')->capture_default_str();
  kc->add_option("--rho", kc_cfg.rho, "Weight scale (<= 0 selects 1/sqrt(d))")->capture_default_str();
  kc->add_option("--pair-seed", kc_cfg.pair_seed, "Seed of the input pairs")->capture_default_str();

  // equiv-check -------------------------------------------------------------
  auto* ec = app.add_subcommand("equiv-check", "Random feature / inducing point posterior equivalence");
  EquivalenceConfig ec_cfg;
  std::string ec_sigma = "relu";
  ec->add_option("--instances", ec_cfg.instances, "Instances per block kind")->capture_default_str();
  ec->add_option("--n", ec_cfg.n, "Inputs per instance")->capture_default_str();
  ec->add_option("--r", ec_cfg.r, "Features / inducing points")->capture_default_str();
  ec->add_option("--d-in", ec_cfg.d_in, "Input dimension")->capture_default_str();
  ec->add_option("--sigma", ec_sigma, "Random feature activation")->capture_default_str();
  ec->add_option("--lengthscale", ec_cfg.rbf_lengthscale, "RBF lengthscale")->capture_default_str();
  ec->add_option("--seed", ec_cfg.seed, "Seed")->capture_default_str();

  for (auto* sub : {sk, bench, synth, bcsv, tr, pr, ia, kc, ec}) sub->configurable();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    out.set_dir(out_dir);
    out.write("manifest.toml", manifest(app));

    if (sk->parsed()) {
      Skeleton s;
      if (!sk_file.empty()) {
        out.add_input(sk_file);
        s = parse_skeleton(read_file(sk_file));
      } else if (sk_preset == "chain") {
        s = chain_skeleton(sk_depth, sk_inputs, parse_activation(sk_hidden));
      } else if (sk_preset == "multitask") {
        s = multitask_skeleton(sk_shared, sk_tasks, sk_inputs, parse_activation(sk_hidden));
      } else if (sk_preset == "additive") {
        AdditiveOptions o;
        o.inputs = sk_inputs;
        o.hidden = parse_activation(sk_hidden);
        s = additive_skeleton(sk_subnets, {}, o);
      } else {
        throw Error("skeleton: pass --file or --preset");
      }
      out.write("skeleton.txt", serialize_skeleton(s));
      Index nodes = 0, edges = 0;
      for (Index l = 0; l <= s.depth(); ++l) nodes += s.layer_size(l);
      for (Index l = 1; l <= s.depth(); ++l) edges += static_cast<Index>(s.edges(l).size());
      std::cout << "depth " << s.depth() << ", " << nodes << " nodes, " << edges << " edges, inputs " << s.input_dim()
                << ", outputs " << s.output_dim() << ", hidden components " << hidden_components(s) << "\n";
    } else if (synth->parsed()) {
      const Dataset train_set = generate_synthetic(syn_fid, syn_train, syn_noise, syn_seed, 0);
      const Dataset test_set = generate_synthetic(syn_fid, syn_test, syn_noise, syn_seed, 1);
      out.write("train.csv", dataset_csv(train_set));
      out.write("test.csv", dataset_csv(test_set));
    } else if (bcsv->parsed()) {
      out.add_input(bc_data);
      const Dataset all = ingest_csv(bc_data, bc_target, false);
      AddnnConfig cfg = bc_train.addnn;
      cfg.variant = parse_variant(bc_train.variant);
      std::ostringstream table;
      table << "split,rmse,mll\n";
      double sum_rmse = 0.0, sum_mll = 0.0, sq_rmse = 0.0, sq_mll = 0.0;
      for (Index s = 0; s < bc_splits; ++s) {
        const Split split = random_split(all, bc_test_fraction, bc_split_seed + static_cast<std::uint64_t>(s));
        const AddnnFit fit = fit_addnn(cfg, raw_features(split.train), split.train.y);
        const auto m = evaluate(fit.model, split.test, bc_mc, cfg.train.seed, "");
        table << s << "," << fmt(m[0].second) << "," << fmt(m[1].second) << "\n";
        sum_rmse += m[0].second;
        sum_mll += m[1].second;
        sq_rmse += m[0].second * m[0].second;
        sq_mll += m[1].second * m[1].second;
        std::cout << "split " << s << ": rmse " << m[0].second << ", mll " << m[1].second << "\n";
      }
      const double n = static_cast<double>(bc_splits);
      auto sd = [n](double sum, double sq) { return n > 1 ? std::sqrt(std::max(0.0, (sq - sum * sum / n) / (n - 1))) : 0.0; };
      table << "mean," << fmt(sum_rmse / n) << "," << fmt(sum_mll / n) << "\n";
      table << "std," << fmt(sd(sum_rmse, sq_rmse)) << "," << fmt(sd(sum_mll, sq_mll)) << "\n";
      out.write("metrics.csv", table.str());
    } else if (tr->parsed()) {
      const LoadedData ld = load_data(tr_data, out, true);
      const Matrix x = raw_features(ld.train);
      SavedModel sm;
      sm.preset = tr_opts.preset;
      sm.feature_names = feature_labels(ld.train);
      sm.target_name = ld.train.target_name;
      std::vector<TraceRow> trace;
      if (tr_opts.preset == "addnn") {
        AddnnConfig cfg = tr_opts.addnn;
        cfg.variant = parse_variant(tr_opts.variant);
        AddnnFit fit = fit_addnn(cfg, x, ld.train.y);
        sm.model = std::move(fit.model);
        trace = std::move(fit.trace);
      } else {
        out.add_input(tr_opts.skeleton);
        sm.model = fit_bnn(tr_opts, x, ld.train.y, trace);
      }
      out.check_model_stem(out.path("model").string());
      save_model(sm, out.path("model").string());
      out.write("trace.csv", trace_csv(trace));
      auto metrics = evaluate(sm.model, ld.train, tr_mc, tr_opts.addnn.train.seed, "train_");
      if (ld.test) {
        const auto t = evaluate(sm.model, *ld.test, tr_mc, tr_opts.addnn.train.seed, "test_");
        metrics.insert(metrics.end(), t.begin(), t.end());
      }
      metrics.emplace_back("noise_var", sm.model.noise_var());
      if (!trace.empty()) metrics.emplace_back("final_neg_elbo", trace.back().neg_elbo);
      out.write("metrics.csv", metrics_csv(metrics));
      if (tr_opts.preset == "addnn") out.write("clusters.csv", clusters_csv(extract_clusters(sm.model)));
      for (const auto& [k, v] : metrics) std::cout << k << " " << v << "\n";
    } else if (pr->parsed()) {
      out.add_input(pr_model + ".txt");
      out.add_input(pr_model + ".bin");
      const SavedModel sm = load_model(pr_model);
      Dataset d;
      if (pr_data.fid > 0) {
        d = generate_synthetic(pr_data.fid, pr_data.n_train, pr_data.noise_var,
                               pr_data.data_seed, pr_part);
      } else if (!pr_data.data.empty()) {
        out.add_input(pr_data.data);
        d = ingest_csv(pr_data.data, pr_data.target, false);
      } else {
        throw Error("no data: pass --fid or --data");
      }
      if (d.features() != sm.model.inputs()) {
        throw Error("model expects " + std::to_string(sm.model.inputs()) + " features, data has " +
                    std::to_string(d.features()));
      }
      PredictOptions po;
      po.mc_samples = pr_mc;
      po.seed = pr_seed;
      po.keep_draws = false;
      const Prediction p = predict_addnn(sm.model, raw_features(d), po);
      std::ostringstream csv;
      csv << "row,mean,variance,variance_with_noise\n";
      for (Index i = 0; i < d.rows(); ++i) {
        csv << i << "," << fmt(p.mean(i, 0)) << "," << fmt(p.variance(i, 0)) << ","
            << fmt(p.variance(i, 0) + sm.model.noise_var()) << "\n";
      }
      out.write("predictions.csv", csv.str());
      const auto metrics = std::vector<std::pair<std::string, double>>{
          {"rmse", rmse(p.mean.col(0), d.y)},
          {"mll", mean_log_likelihood(p.mean.col(0), p.variance.col(0), d.y, sm.model.noise_var())},
          {"noise_var", sm.model.noise_var()}};
      out.write("metrics.csv", metrics_csv(metrics));
      for (const auto& [k, v] : metrics) std::cout << k << " " << v << "\n";
    } else if (ia->parsed()) {
      out.add_input(ia_model + ".txt");
      out.add_input(ia_model + ".bin");
      const SavedModel sm = load_model(ia_model);
      const LoadedData ld = load_data(ia_data, out, false);
      if (ld.train.features() != sm.model.inputs()) {
        throw Error("model expects " + std::to_string(sm.model.inputs()) + " features, data has " +
                    std::to_string(ld.train.features()));
      }
      ClusterThreshold th;
      th.fraction = ia_fraction;
      th.absolute = ia_absolute;
      const auto clusters = extract_clusters(sm.model, th);
      const Index budget = enumeration_budget(clusters, ia_cap);
      const InteractionReport rep = interaction_strengths(sm.model, clusters, raw_features(ld.train), ia_opts);
      out.write("clusters.csv", clusters_csv(clusters));
      out.write("interactions.csv", interactions_csv(rep));
      for (const auto& h : rep.heatmaps) {
        out.write("heatmap_" + std::to_string(h.a + 1) + "_" + std::to_string(h.b + 1) + ".csv", heatmap_csv(h));
      }
      std::vector<std::pair<std::string, double>> metrics{{"candidate_subsets", static_cast<double>(budget)}};
      if (ia_data.fid > 0) {
        metrics.emplace_back("top_rank_recall",
                             top_rank_recall(synthetic_truth(ia_data.fid, ia_data.noise_var).interactions,
                                             rep.ranked_interactions()));
      }
      out.write("metrics.csv", metrics_csv(metrics));
      const auto ranked = rep.ranked_interactions();
      std::cout << "clusters:";
      for (const auto& c : clusters) std::cout << " {" << subset_label(c) << "}";
      std::cout << "\n";
      for (std::size_t i = 0; i < rep.entries.size() && i < 10; ++i) {
        std::cout << subset_label(rep.entries[i].subset) << " " << rep.entries[i].strength << " +- "
                  << rep.entries[i].strength_std << "\n";
      }
      for (const auto& [k, v] : metrics) std::cout << k << " " << v << "\n";
    } else if (kc->parsed()) {
      kc_cfg.sigma = parse_activation(kc_sigma);
      const auto rows = concentration_experiment(kc_cfg);
      const auto errors = mean_sup_error(rows, kc_cfg.r_grid);
      out.write("kernel_check.csv", concentration_csv(rows));
      std::vector<std::pair<std::string, double>> metrics;
      for (std::size_t i = 0; i < errors.size(); ++i) {
        metrics.emplace_back("mean_sup_error_r" + std::to_string(kc_cfg.r_grid[i]), errors[i]);
      }
      if (kc_cfg.r_grid.size() >= 2) metrics.emplace_back("log_log_slope", log_log_slope(kc_cfg.r_grid, errors));
      out.write("metrics.csv", metrics_csv(metrics));
      for (const auto& [k, v] : metrics) std::cout << k << " " << v << "\n";
    } else if (ec->parsed()) {
      ec_cfg.sigma = parse_activation(ec_sigma);
      const auto results = equivalence_check(ec_cfg);
      out.write("equiv_check.csv", equivalence_csv(results));
      double worst = 0.0;
      for (const auto& r : results) worst = std::max(worst, r.max_abs_discrepancy);
      out.write("metrics.csv", metrics_csv({{"max_abs_discrepancy", worst}}));
      std::cout << "max_abs_discrepancy " << worst << " over " << results.size() << " cases\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace bnnblocks::cli
