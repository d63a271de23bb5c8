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

// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "bnnblocks/addnn.hpp"
#include "bnnblocks/bench.hpp"
#include "bnnblocks/kernels.hpp"
#include "bnnblocks/linalg.hpp"
#include "bnnblocks/network.hpp"
#include "bnnblocks/vi.hpp"

using namespace bnnblocks;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  std::printf("%s [%d] %s: %s\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string printf_string(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

// 1 -------------------------------------------------------------------------

struct TinyCase {
  BayesNet net;
  VariationalState q;
  Matrix x;
  Matrix y;
};

TinyCase tiny_case(int k) {
  CounterRng rng(900 + static_cast<std::uint64_t>(k));
  TinyCase c;
  const Index inputs = 2 + k % 2;
  const Skeleton s = k % 2 == 0 ? chain_skeleton(2, inputs, Activation::Tanh) : multitask_skeleton(2, 1, inputs, Activation::Tanh);
  const char* hidden[] = {"rb:3:tanh+fb", "fb", "rb:2:sigmoid+fb", "rb:3:erf+fb", "fb"};
  const char* output[] = {"fb", "rb:2:tanh+fb", "fb", "rb:2:tanh+fb", "rb:3:sigmoid+fb"};
  c.x = rng.normal_matrix(6, inputs);
  c.net = build_network(s, FeaturePolicy::uniform(s, parse_recipe(hidden[k]), parse_recipe(output[k])),
                        BuildOptions{BiasMode::TrainableInFB, static_cast<std::uint64_t>(k), &c.x});
  std::vector<GroupFamily> fam;
  for (Index g = 0; g < c.net.group_count(); ++g) {
    const Index pick = (g + k) % 3;
    fam.push_back(pick == 0 ? GroupFamily::gaussian() : pick == 1 ? GroupFamily::mixture(0.8) : GroupFamily::gaussian(true));
  }
  c.q = init_state(c.net, fam, std::vector<GroupPrior>(fam.size(), GroupPrior::standard_normal()),
                   Likelihood::gaussian(0.5, true), 0.3);
  for (Matrix* p : c.q.parameters()) *p += 0.3 * rng.normal_matrix(p->rows(), p->cols());
  c.y = rng.normal_matrix(6, 1);
  return c;
}

void gradient_check() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  Index max_params = 0;
  bool mixture_seen = false, gaussian_seen = false, rb_seen = false;
  for (int k = 0; k < 5; ++k) {
    TinyCase c = tiny_case(k);
    Index params = 0;
    for (const Matrix* p : std::as_const(c.q).parameters()) params += p->size();
    max_params = std::max(max_params, params);
    for (const auto& f : c.q.family) {
      mixture_seen = mixture_seen || f.kind == FamilyKind::Mixture;
      gaussian_seen = gaussian_seen || f.kind == FamilyKind::Gaussian;
    }
    for (const auto& layer : c.net.nodes())
      for (const auto& node : layer)
        for (const auto& fb : node.features) rb_seen = rb_seen || fb.kind == StageKind::RB;
    CounterRng rng(77, static_cast<std::uint64_t>(k));
    const ElboNoise noise = sample_elbo_noise(c.net, c.q, c.x.rows(), 2, rng);
    auto elbo_of = [&](const VariationalState& q) {
      Tape tape;
      const StateVars vars = bind_state(tape, q);
      return elbo_on_tape(c.net, q, vars, c.x, c.y, 30, noise).elbo.scalar();
    };
    Tape tape;
    const StateVars vars = bind_state(tape, c.q);
    const ElboTerms terms = elbo_on_tape(c.net, c.q, vars, c.x, c.y, 30, noise);
    const auto grads = tape.gradient(terms.elbo, vars.flat);
    double diff2 = 0.0, norm2 = 0.0;
    const auto names = c.q.parameter_names();
    for (std::size_t i = 0; i < grads.size(); ++i) {
      for (Index e = 0; e < grads[i].size(); ++e) {
        const double h = 1e-5;
        VariationalState qp = c.q, qm = c.q;
        qp.parameters()[i]->data()[e] += h;
        qm.parameters()[i]->data()[e] -= h;
        const double fd = (elbo_of(qp) - elbo_of(qm)) / (2.0 * h);
        diff2 += std::pow(grads[i].data()[e] - fd, 2);
        norm2 += fd * fd;
      }
    }
    worst = std::max(worst, std::sqrt(diff2 / std::max(norm2, 1e-300)));
  }
  const double secs = seconds_since(t0);
  const bool ok = worst <= 1e-4 && secs < 10.0 && max_params <= 50 && mixture_seen && gaussian_seen && rb_seen;
  report(1, ok, "ELBO gradients vs central differences",
         printf_string("max relative error %.3g over 5 networks (<= %ld params), %.2f s", worst,
                       static_cast<long>(max_params), secs));
}

// 2 -------------------------------------------------------------------------

void concentration() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail;
  for (Activation a : {Activation::ReLU, Activation::Tanh}) {
    ConcentrationConfig cfg;
    cfg.sigma = a;
    const auto rows = concentration_experiment(cfg);
    double at4096 = 0.0;
    for (const auto& r : rows)
      if (r.r == 4096) at4096 = std::max(at4096, r.sup_error);
    const double slope = log_log_slope(cfg.r_grid, mean_sup_error(rows, cfg.r_grid));
    ok = ok && at4096 <= 0.05 && slope >= -0.65 && slope <= -0.35;
    detail += printf_string("%s: sup error at r=4096 %.4f, slope %.3f; ", std::string(to_string(a)).c_str(), at4096, slope);
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 120.0;
  report(2, ok, "random feature kernel concentration", detail + printf_string("%.1f s", secs));
}

// 3 -------------------------------------------------------------------------

void arc_cosine() {
  const Index d = 3, pairs = 20, samples = 10'000'000;
  CounterRng rng(31);
  std::vector<Vector> a(pairs), b(pairs);
  a[0] = Vector::Unit(d, 0);
  b[0] = Vector::Unit(d, 0);
  a[1] = Vector::Unit(d, 0);
  b[1] = Vector::Unit(d, 1);
  for (Index i = 2; i < pairs; ++i) {
    a[i] = rng.normal_matrix(d, 1);
    b[i] = rng.normal_matrix(d, 1);
  }
  Vector sum = Vector::Zero(pairs), sq = Vector::Zero(pairs);
  CounterRng wr(32);
  Vector w(d);
  for (Index s = 0; s < samples; ++s) {
    for (Index j = 0; j < d; ++j) w(j) = wr.normal();
    for (Index i = 0; i < pairs; ++i) {
      const double v = std::max(0.0, a[i].dot(w)) * std::max(0.0, b[i].dot(w));
      sum(i) += v;
      sq(i) += v * v;
    }
  }
  double worst = 0.0;
  for (Index i = 0; i < pairs; ++i) {
    const double n = static_cast<double>(samples);
    const double mean = sum(i) / n;
    const double se = std::sqrt((sq(i) / n - mean * mean) / n);
    worst = std::max(worst, std::abs(arc_cosine_closed_form(a[i], b[i]) - mean) / se);
  }
  const double k0 = arc_cosine_closed_form(a[0], b[0]);
  const double k90 = arc_cosine_closed_form(a[1], b[1]);
  const bool ok = worst <= 3.0 && std::abs(k0 - 0.5) < 1e-14 && std::abs(k90 - 0.5 / std::numbers::pi) < 1e-14;
  report(3, ok, "arc-cosine closed form vs Monte Carlo",
         printf_string("max |closed - MC| = %.2f SE over %ld pairs; theta=0 -> %.15f, theta=pi/2 -> %.15f", worst,
                       static_cast<long>(pairs), k0, k90));
}

// 4 -------------------------------------------------------------------------

void equivalence() {
  const auto t0 = Clock::now();
  EquivalenceConfig cfg;
  cfg.instances = 10;
  cfg.n = 8;
  cfg.r = 4;
  const auto results = equivalence_check(cfg);
  double rf = 0.0, ipb = 0.0;
  for (const auto& r : results) {
    (r.name.rfind("rb", 0) == 0 ? rf : ipb) = std::max(r.name.rfind("rb", 0) == 0 ? rf : ipb, r.max_abs_discrepancy);
  }
  const double secs = seconds_since(t0);
  const bool ok = results.size() == 20 && rf <= 1e-8 && ipb <= 1e-8 && secs < 5.0;
  report(4, ok, "random feature / inducing point posterior equivalence",
         printf_string("%zu cases, max discrepancy random feature %.3g, inducing point with offset %.3g, %.2f s",
                       results.size(), rf, ipb, secs));
}

// 5 -------------------------------------------------------------------------

/// Σ_{S⊆T} (-1)^{|T\S|} E[f(x_S, X_{-S})] by enumerating every combination of data values.
double brute_force_component(const std::function<double(const Vector&)>& f, const Subset& t, const Vector& x,
                             const Matrix& data) {
  const Index p = data.cols(), n = data.rows();
  double total = 0.0;
  for (unsigned mask = 0; mask < (1u << t.size()); ++mask) {
    std::vector<bool> fixed(static_cast<std::size_t>(p), false);
    int size = 0;
    for (std::size_t k = 0; k < t.size(); ++k)
      if (mask & (1u << k)) {
        fixed[static_cast<std::size_t>(t[k])] = true;
        ++size;
      }
    std::vector<Index> free;
    for (Index j = 0; j < p; ++j)
      if (!fixed[static_cast<std::size_t>(j)]) free.push_back(j);
    double combos = 1.0, acc = 0.0;
    for (std::size_t k = 0; k < free.size(); ++k) combos *= static_cast<double>(n);
    std::vector<Index> idx(free.size(), 0);
    Vector z = x;
    for (;;) {
      for (std::size_t k = 0; k < free.size(); ++k) z(free[k]) = data(idx[k], free[k]);
      acc += f(z);
      std::size_t k = 0;
      while (k < idx.size() && ++idx[k] == n) idx[k++] = 0;
      if (k == idx.size()) break;
    }
    total += (((static_cast<int>(t.size()) - size) % 2) ? -1.0 : 1.0) * acc / combos;
  }
  return total;
}

AdditiveFunction random_additive(CounterRng& rng, Index p, std::vector<Subset>& clusters) {
  AdditiveFunction f;
  f.intercept = rng.normal();
  for (const Subset& c : clusters) {
    const Matrix w = rng.normal_matrix(static_cast<Index>(c.size()), 3);
    const Vector v = rng.normal_matrix(3, 1);
    f.subnets.push_back(Subnet{c, [c, w, v](const Matrix& x) {
                                 Matrix xs(x.rows(), static_cast<Index>(c.size()));
                                 for (std::size_t k = 0; k < c.size(); ++k) xs.col(static_cast<Index>(k)) = x.col(c[k]);
                                 return Vector((xs * w).array().tanh().matrix() * v);
                               }});
  }
  (void)p;
  return f;
}

void anova() {
  double oracle = 0.0, cross = 0.0, telescoping = 0.0;
  bool rejected = true;
  for (int inst = 0; inst < 20; ++inst) {
    CounterRng rng(500 + static_cast<std::uint64_t>(inst));
    const Index p = 2 + inst % 3;
    const Index n = 5 + (inst * 7) % 26;
    const Matrix data = rng.uniform_matrix(n, p);
    std::vector<Subset> clusters;
    if (p == 4) {
      clusters = {{0, 1}, {2, 3}};
    } else {
      Subset all;
      for (Index j = 0; j < p; ++j) all.push_back(j);
      clusters = {all, {0}};
    }
    const AdditiveFunction f = random_additive(rng, p, clusters);
    const auto scalar_f = [&f](const Vector& z) { return f(Matrix(z.transpose()))(0); };
    const Matrix eval = rng.uniform_matrix(3, p);
    Vector recon = Vector::Zero(eval.rows());
    for (unsigned mask = 0; mask < (1u << p); ++mask) {
      Subset t;
      for (Index j = 0; j < p; ++j)
        if (mask & (1u << j)) t.push_back(j);
      AnovaOptions forced;
      forced.force = true;
      const Vector comp = anova_component(f, t, eval, data, forced);
      recon += comp;
      for (Index i = 0; i < eval.rows(); ++i) {
        oracle = std::max(oracle, std::abs(comp(i) - brute_force_component(scalar_f, t, eval.row(i).transpose(), data)));
      }
      const bool crosses = p == 4 && std::any_of(t.begin(), t.end(), [](Index j) { return j < 2; }) &&
                           std::any_of(t.begin(), t.end(), [](Index j) { return j >= 2; });
      if (crosses) {
        cross = std::max(cross, comp.cwiseAbs().maxCoeff());
        try {
          anova_component(f, t, eval, data);
          rejected = false;
        } catch (const Error&) {
        }
      }
    }
    telescoping = std::max(telescoping, (recon - f(eval)).cwiseAbs().maxCoeff());
  }
  const bool ok = oracle <= 1e-10 && cross == 0.0 && rejected && telescoping <= 1e-8;
  report(5, ok, "ANOVA components vs brute-force enumeration",
         printf_string("max oracle error %.3g, max cross-subnet term %g (%s without force), telescoping error %.3g",
                       oracle, cross, rejected ? "rejected" : "NOT rejected", telescoping));
}

// 6-8 -----------------------------------------------------------------------

struct F1Run {
  double rmse = 0.0;
  double mll = 0.0;
  InteractionReport report;
  double seconds = 0.0;
};

F1Run f1_run(Variant v, std::uint64_t seed, Index draws) {
  const auto t0 = Clock::now();
  const Dataset train_set = generate_synthetic(1, 5000, 1.0, seed, 0);
  const Dataset test_set = generate_synthetic(1, 5000, 1.0, seed, 1);
  AddnnConfig cfg;
  cfg.variant = v;
  cfg.train.seed = seed;
  const AddnnFit fit = fit_addnn(cfg, train_set.x, train_set.y);
  PredictOptions po;
  po.keep_draws = false;
  po.seed = seed;
  const Prediction pred = predict_addnn(fit.model, test_set.x, po);
  F1Run run;
  run.rmse = rmse(pred.mean.col(0), test_set.y);
  run.mll = mean_log_likelihood(pred.mean.col(0), pred.variance.col(0), test_set.y, fit.model.noise_var());
  StrengthOptions so;
  so.mc_draws = draws;
  so.heatmap_pairs = 0;
  so.seed = seed;
  run.report = interaction_strengths(fit.model, extract_clusters(fit.model), train_set.x, so);
  run.seconds = seconds_since(t0);
  return run;
}

double strength(const InteractionReport& r, const Subset& s) {
  const InteractionEntry* e = r.find(s);
  return e ? e->strength : 0.0;
}

double strongest_other_pair(const InteractionReport& r) {
  double best = 0.0;
  for (const auto& e : r.entries)
    if (e.subset.size() == 2 && e.subset != Subset{0, 1}) best = std::max(best, e.strength);
  return best;
}

void f1_suite() {
  const auto t0 = Clock::now();
  int rmse_ok = 0, recall_ok = 0;
  bool pair_dominates = true;
  std::string rmses, recalls;
  F1Run mcd_seed1;
  const GroundTruth truth = synthetic_truth(1, 1.0);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    F1Run run = f1_run(Variant::McDropout, seed, 20);
    rmse_ok += run.rmse <= 1.15;
    const double recall = top_rank_recall(truth.interactions, run.report.ranked_interactions());
    recall_ok += recall == 1.0;
    const double s12 = strength(run.report, {0, 1}), other = strongest_other_pair(run.report);
    pair_dominates = pair_dominates && s12 > other;
    rmses += printf_string("%.3f ", run.rmse);
    recalls += printf_string("%.2f ({1,2} %.2f vs %.2f) ", recall, s12, other);
    if (seed == 1) mcd_seed1 = std::move(run);
  }
  const double secs = seconds_since(t0);
  report(6, rmse_ok >= 4 && secs <= 600.0, "f1 test RMSE with MC dropout",
         printf_string("RMSE by seed %s(%d/5 <= 1.15), %.0f s including strengths", rmses.c_str(), rmse_ok, secs));
  report(7, recall_ok >= 4 && pair_dominates, "f1 interaction detection",
         printf_string("recall by seed %s(%d/5 = 1)", recalls.c_str(), recall_ok));

  bool ok = true;
  std::string detail;
  for (Variant v : {Variant::McDropout, Variant::RF, Variant::DKL, Variant::DRF}) {
    const F1Run run = v == Variant::McDropout ? mcd_seed1 : f1_run(v, 1, 10);
    double main4 = strength(run.report, {3}), best_other = 0.0, noise = 0.0;
    for (Index j = 0; j < 10; ++j) {
      if (j == 3) continue;
      const double s = strength(run.report, {j});
      best_other = std::max(best_other, s);
      if (j >= 5) noise = std::max(noise, s);
    }
    const bool vok = main4 > best_other && noise < 0.2 * main4 && std::isfinite(run.mll) && run.mll > -3.0;
    ok = ok && vok;
    detail += printf_string("%s: x4 %.2f, next %.2f, max x6-x10 %.3f, MLL %.3f; ", std::string(to_string(v)).c_str(),
                            main4, best_other, noise, run.mll);
  }
  report(8, ok, "f1 main-effect ordering for every variant", detail);
}

// 9 -------------------------------------------------------------------------

void kl_check() {
  double worst = 0.0, at_prior = 1.0;
  const Skeleton s = chain_skeleton(1, 3);
  const BayesNet net = build_network(s, FeaturePolicy::uniform(s, parse_recipe("fb")));
  for (int c = 0; c < 10; ++c) {
    CounterRng rng(700 + static_cast<std::uint64_t>(c));
    VariationalState q = init_state(net, GroupFamily::gaussian(), GroupPrior::standard_normal(), Likelihood::gaussian());
    q.mean[0] = rng.normal_matrix(q.mean[0].rows(), q.mean[0].cols());
    q.log_std[0] = (rng.uniform_matrix(q.mean[0].rows(), q.mean[0].cols()).array() - 0.5).matrix();
    const double closed = kl_term(q);
    const Index samples = 1'000'000;
    const Matrix& mu = q.mean[0];
    const Matrix sd = q.log_std[0].array().exp().matrix();
    double acc = 0.0;
    for (Index k = 0; k < samples; ++k) {
      for (Index i = 0; i < mu.size(); ++i) {
        const double e = rng.normal();
        const double w = mu.data()[i] + sd.data()[i] * e;
        // log q(w) - log p(w)
        acc += -0.5 * e * e - std::log(sd.data()[i]) + 0.5 * w * w;
      }
    }
    worst = std::max(worst, std::abs(acc / static_cast<double>(samples) - closed) / closed);
  }
  VariationalState q = init_state(net, GroupFamily::gaussian(), GroupPrior::standard_normal(), Likelihood::gaussian());
  q.mean[0].setZero();
  q.log_std[0].setZero();
  at_prior = kl_term(q);
  report(9, worst <= 0.01 && at_prior == 0.0, "Gaussian KL closed form",
         printf_string("max relative error vs 1e6-sample Monte Carlo %.4f over 10 cases, KL at the prior %g", worst,
                       at_prior));
}

// 10 ------------------------------------------------------------------------

void bayesian_linear() {
  CounterRng rng(1010);
  const Matrix x = rng.normal_matrix(20, 3);
  Vector beta(3);
  beta << 1.5, -2.0, 0.5;
  const double noise = 0.25;
  const Matrix y = x * beta + std::sqrt(noise) * rng.normal_matrix(20, 1);
  const Skeleton s = chain_skeleton(1, 3);
  const BayesNet net = build_network(s, FeaturePolicy::uniform(s, parse_recipe("fb")));
  VariationalState q =
      init_state(net, GroupFamily::gaussian(true), GroupPrior::standard_normal(), Likelihood::gaussian(noise, false));
  TrainConfig cfg;
  cfg.steps = 6000;
  cfg.batch = 20;
  cfg.lr = 0.05;
  cfg.decay_rate = 0.01;
  cfg.decay_steps = 6000;
  cfg.mc_samples = 4;
  cfg.seed = 3;
  const TrainResult res = train(net, q, x, y, cfg);
  const Matrix a = x.transpose() * x + noise * Matrix::Identity(3, 3);
  const Vector oracle = spd_solve(a, x.transpose() * y);
  const double err = (res.state.mean[0].col(0) - oracle).cwiseAbs().maxCoeff();
  report(10, err <= 1e-2, "single function block recovers the ridge posterior mean",
         printf_string("max |mu - closed form| %.3g", err));
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
  const auto t0 = Clock::now();
  struct Check {
    std::vector<int> ids;
    std::function<void()> run;
  };
  const std::vector<Check> checks = {{{1}, gradient_check}, {{2}, concentration}, {{3}, arc_cosine},
                                     {{4}, equivalence},    {{5}, anova},         {{6, 7, 8}, f1_suite},
                                     {{9}, kl_check},       {{10}, bayesian_linear}};
  // Optional arguments select criteria by number.
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  for (const auto& check : checks) {
    if (!selected.empty() && std::none_of(check.ids.begin(), check.ids.end(), [&](int id) {
          return std::find(selected.begin(), selected.end(), id) != selected.end();
        }))
      continue;
    try {
      check.run();
    } catch (const std::exception& e) {
      std::printf("FAIL [%d] check aborted: %s\n", check.ids.front(), e.what());
      ++failures;
    }
  }
  std::printf("%d failure(s), %.0f s total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
