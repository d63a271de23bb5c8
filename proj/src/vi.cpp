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
#include "bnnblocks/vi.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace bnnblocks {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;

bool has_offset(const NetworkNode& n) {
  for (const auto& b : n.features)
    if (b.kind == StageKind::IPB && b.offset) return true;
  return false;
}

Var sum_squares(const Var& a) { return sum(square(a)); }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string to_string(FamilyKind k) {
  switch (k) {
    case FamilyKind::Gaussian: return "gaussian";
    case FamilyKind::PointMass: return "point-mass";
    case FamilyKind::Mixture: return "mixture";
  }
  return "gaussian";
}

std::string to_string(PriorKind k) {
  return k == PriorKind::StandardNormal ? "standard-normal" : "group-lasso";
}

std::vector<Matrix*> VariationalState::parameters() {
  std::vector<Matrix*> out;
  for (auto& m : mean) out.push_back(&m);
  for (auto& m : log_std)
    if (m.size() != 0) out.push_back(&m);
  for (auto& group : chol)
    for (auto& m : group) out.push_back(&m);
  for (auto& m : bias)
    if (m.size() != 0) out.push_back(&m);
  if (likelihood.kind == LikelihoodKind::Gaussian && likelihood.train_noise) out.push_back(&log_noise_var);
  return out;
}

std::vector<const Matrix*> VariationalState::parameters() const {
  auto ptrs = const_cast<VariationalState*>(this)->parameters();
  return {ptrs.begin(), ptrs.end()};
}

std::vector<std::string> VariationalState::parameter_names() const {
  std::vector<std::string> out;
  for (std::size_t g = 0; g < mean.size(); ++g) out.push_back("mean[" + std::to_string(g) + "]");
  for (std::size_t g = 0; g < log_std.size(); ++g)
    if (log_std[g].size() != 0) out.push_back("log_std[" + std::to_string(g) + "]");
  for (std::size_t g = 0; g < chol.size(); ++g)
    for (std::size_t k = 0; k < chol[g].size(); ++k)
      out.push_back("chol[" + std::to_string(g) + "][" + std::to_string(k) + "]");
  for (std::size_t g = 0; g < bias.size(); ++g)
    if (bias[g].size() != 0) out.push_back("bias[" + std::to_string(g) + "]");
  if (likelihood.kind == LikelihoodKind::Gaussian && likelihood.train_noise) out.push_back("log_noise_var");
  return out;
}

VariationalState init_state(const BayesNet& net, std::vector<GroupFamily> family, std::vector<GroupPrior> prior,
                            Likelihood likelihood, double init_std) {
  const Index groups = net.group_count();
  if (static_cast<Index>(family.size()) != groups || static_cast<Index>(prior.size()) != groups) {
    throw Error("init_state: need one family and one prior per function block (" + std::to_string(groups) + ")");
  }
  if (likelihood.kind == LikelihoodKind::Gaussian && !(likelihood.noise_var > 0.0)) {
    throw Error("init_state: Gaussian likelihood needs noise variance > 0");
  }
  if (likelihood.kind == LikelihoodKind::Softmax && likelihood.classes != net.output_dim()) {
    throw Error("init_state: softmax with " + std::to_string(likelihood.classes) + " classes needs " +
                std::to_string(likelihood.classes) + " network outputs, got " + std::to_string(net.output_dim()));
  }
  if (!(init_std > 0.0)) throw Error("init_state: init_std must be positive");
  VariationalState q;
  q.family = std::move(family);
  q.prior = std::move(prior);
  q.likelihood = likelihood;
  q.log_noise_var(0, 0) = std::log(likelihood.noise_var);
  const Weights& init = net.initial_means();
  for (Index g = 0; g < groups; ++g) {
    const auto& fam = q.family[static_cast<std::size_t>(g)];
    if (fam.kind == FamilyKind::Mixture && !(fam.keep_prob > 0.0 && fam.keep_prob <= 1.0)) {
      throw Error("init_state: keep probability must lie in (0, 1]");
    }
    const Matrix& m = init.v[static_cast<std::size_t>(g)];
    q.mean.push_back(m);
    const bool gauss = fam.kind == FamilyKind::Gaussian;
    q.log_std.push_back(gauss && !fam.full_covariance ? Matrix(Matrix::Constant(m.rows(), m.cols(), std::log(init_std)))
                                                      : Matrix());
    std::vector<Matrix> factors;
    if (gauss && fam.full_covariance) {
      for (Index k = 0; k < m.cols(); ++k) {
        Matrix a = Matrix::Zero(m.rows(), m.rows());
        a.diagonal().setConstant(std::log(init_std));
        factors.push_back(std::move(a));
      }
    }
    q.chol.push_back(std::move(factors));
    q.bias.push_back(init.bias[static_cast<std::size_t>(g)]);
  }
  return q;
}

VariationalState init_state(const BayesNet& net, GroupFamily family, GroupPrior prior, Likelihood likelihood,
                            double init_std) {
  const auto groups = static_cast<std::size_t>(net.group_count());
  return init_state(net, std::vector<GroupFamily>(groups, family), std::vector<GroupPrior>(groups, prior), likelihood,
                    init_std);
}

StateVars bind_state(Tape& tape, const VariationalState& q) {
  StateVars v;
  const Index groups = q.group_count();
  for (Index g = 0; g < groups; ++g) {
    v.mean.push_back(tape.variable(q.mean[static_cast<std::size_t>(g)]));
    v.flat.push_back(v.mean.back());
  }
  for (Index g = 0; g < groups; ++g) {
    const Matrix& ls = q.log_std[static_cast<std::size_t>(g)];
    v.log_std.push_back(ls.size() != 0 ? tape.variable(ls) : Var());
    if (ls.size() != 0) v.flat.push_back(v.log_std.back());
  }
  for (Index g = 0; g < groups; ++g) {
    std::vector<Var> factors;
    for (const auto& a : q.chol[static_cast<std::size_t>(g)]) {
      factors.push_back(tape.variable(a));
      v.flat.push_back(factors.back());
    }
    v.chol.push_back(std::move(factors));
  }
  for (Index g = 0; g < groups; ++g) {
    const Matrix& b = q.bias[static_cast<std::size_t>(g)];
    v.bias.push_back(b.size() != 0 ? tape.variable(b) : Var());
    if (b.size() != 0) v.flat.push_back(v.bias.back());
  }
  const bool train_noise = q.likelihood.kind == LikelihoodKind::Gaussian && q.likelihood.train_noise;
  v.log_noise_var = train_noise ? tape.variable(q.log_noise_var) : tape.constant(q.log_noise_var);
  if (train_noise) v.flat.push_back(v.log_noise_var);
  return v;
}

ElboNoise sample_elbo_noise(const BayesNet& net, const VariationalState& q, Index batch_rows, Index mc_samples,
                            CounterRng& rng) {
  if (mc_samples < 1) throw Error("elbo: mc_samples must be >= 1");
  ElboNoise noise;
  for (Index s = 0; s < mc_samples; ++s) {
    std::vector<Matrix> eps;
    std::vector<Matrix> offset;
    for (Index g = 0; g < q.group_count(); ++g) {
      const auto& fam = q.family[static_cast<std::size_t>(g)];
      const auto& fb = net.group_node(g).fb;
      if (fam.kind == FamilyKind::Gaussian) {
        eps.push_back(rng.normal_matrix(fb.r, fb.d));
      } else if (fam.kind == FamilyKind::Mixture) {
        Matrix mask(batch_rows, fb.r);
        for (Index i = 0; i < batch_rows; ++i)
          for (Index j = 0; j < fb.r; ++j) mask(i, j) = rng.bernoulli(fam.keep_prob) ? 1.0 : 0.0;
        eps.push_back(std::move(mask));
      } else {
        eps.emplace_back();
      }
      offset.push_back(has_offset(net.group_node(g)) ? rng.normal_matrix(batch_rows, fb.d) : Matrix());
    }
    noise.eps.push_back(std::move(eps));
    noise.offset.push_back(std::move(offset));
  }
  return noise;
}

Var kl_on_tape(const VariationalState& q, const StateVars& vars) {
  Tape& tape = vars.log_noise_var.tape();
  Var total = tape.constant(Matrix::Zero(1, 1));
  for (Index g = 0; g < q.group_count(); ++g) {
    const auto gi = static_cast<std::size_t>(g);
    const auto& fam = q.family[gi];
    const auto& prior = q.prior[gi];
    const Var& mu = vars.mean[gi];
    const auto unsupported = [&]() -> void {
      throw Error("kl_term: unsupported combination " + to_string(fam.kind) + " posterior with " +
                  to_string(prior.kind) + " prior");
    };
    if (prior.kind == PriorKind::GroupLasso) {
      if (fam.kind != FamilyKind::PointMass) unsupported();
      total = total + prior.lambda * sum(row_norms(mu));
      continue;
    }
    switch (fam.kind) {
      case FamilyKind::PointMass: total = total + 0.5 * sum_squares(mu); break;
      case FamilyKind::Mixture: total = total + (0.5 * fam.keep_prob) * sum_squares(mu); break;
      case FamilyKind::Gaussian: {
        const double r = static_cast<double>(mu.rows());
        if (!fam.full_covariance) {
          // 1/2 Σ (σ² + μ² - 1 - log σ²)
          const Var& ls = vars.log_std[gi];
          Var term = sum(exp(2.0 * ls)) + sum_squares(mu) - 2.0 * sum(ls);
          total = total + 0.5 * add_constant(term, -r * static_cast<double>(mu.cols()));
        } else {
          const Matrix eye = Matrix::Identity(mu.rows(), mu.rows());
          for (std::size_t k = 0; k < vars.chol[gi].size(); ++k) {
            const Var& a = vars.chol[gi][k];
            Var term = sum_squares(lower_factor(a)) - 2.0 * sum(cwise_product(a, eye));
            total = total + 0.5 * add_constant(term, -r);
          }
          total = total + 0.5 * sum_squares(mu);
        }
        break;
      }
    }
  }
  return total;
}

double kl_term(const VariationalState& q) {
  Tape tape;
  const StateVars vars = bind_state(tape, q);
  return kl_on_tape(q, vars).scalar();
}

namespace {

TapeWeights tape_weights(const BayesNet& net, const VariationalState& q, const StateVars& vars,
                         const std::vector<Matrix>& eps, const std::vector<Matrix>& offset) {
  TapeWeights w;
  for (Index g = 0; g < q.group_count(); ++g) {
    const auto gi = static_cast<std::size_t>(g);
    const auto& fam = q.family[gi];
    const Var& mu = vars.mean[gi];
    Matrix mask;
    if (fam.kind == FamilyKind::Gaussian && !fam.full_covariance) {
      w.v.push_back(mu + cwise_product(exp(vars.log_std[gi]), eps[gi]));
    } else if (fam.kind == FamilyKind::Gaussian) {
      std::vector<Var> cols;
      for (Index k = 0; k < mu.cols(); ++k) {
        const Var shift = matmul(lower_factor(vars.chol[gi][static_cast<std::size_t>(k)]), Matrix(eps[gi].col(k)));
        cols.push_back(slice_cols(mu, k, 1) + shift);
      }
      w.v.push_back(hcat(std::span<const Var>(cols)));
    } else {
      w.v.push_back(mu);
      if (fam.kind == FamilyKind::Mixture) mask = eps[gi];
    }
    w.bias.push_back(vars.bias[gi]);
    w.input_mask.push_back(std::move(mask));
    (void)net;
  }
  w.offset_noise = offset;
  return w;
}

}  // namespace

ElboTerms elbo_on_tape(const BayesNet& net, const VariationalState& q, const StateVars& vars, const Matrix& x_batch,
                       const Matrix& y_batch, Index n_total, const ElboNoise& noise) {
  if (x_batch.rows() < 1) throw Error("elbo: empty batch");
  require_shape(x_batch.rows() == y_batch.rows(), "elbo batch", x_batch.rows(), x_batch.cols(), y_batch.rows(),
                y_batch.cols());
  Tape& tape = vars.log_noise_var.tape();
  const Var x = tape.constant(x_batch);
  const auto mc = static_cast<Index>(noise.eps.size());
  if (mc < 1) throw Error("elbo: mc_samples must be >= 1");
  Var loglik = tape.constant(Matrix::Zero(1, 1));
  std::vector<Index> labels;
  if (q.likelihood.kind == LikelihoodKind::Softmax) {
    for (Index i = 0; i < y_batch.rows(); ++i) {
      const double c = y_batch(i, 0);
      if (c != std::floor(c) || c < 0 || c >= static_cast<double>(q.likelihood.classes)) {
        throw Error("elbo: label " + std::to_string(c) + " at row " + std::to_string(i) + " is not a class index");
      }
      labels.push_back(static_cast<Index>(c));
    }
  }
  for (Index s = 0; s < mc; ++s) {
    const TapeWeights w = tape_weights(net, q, vars, noise.eps[static_cast<std::size_t>(s)],
                                       noise.offset[static_cast<std::size_t>(s)]);
    const Var f = forward(net, x, w);
    Var ll;
    if (q.likelihood.kind == LikelihoodKind::Gaussian) {
      require_shape(f.cols() == y_batch.cols(), "gaussian likelihood", f.rows(), f.cols(), y_batch.rows(), y_batch.cols());
      const double count = static_cast<double>(f.rows() * f.cols());
      const Var resid = f - tape.constant(y_batch);
      const Var inv_var = exp(-vars.log_noise_var);
      // Σ log N(y; f, δ²)
      ll = -0.5 * mul_scalar(sum(square(resid)), inv_var) - (0.5 * count) * vars.log_noise_var;
      ll = add_constant(ll, -0.5 * count * kLog2Pi);
    } else {
      ll = sum(pick(f, std::span<const Index>(labels)) - log_sum_exp(f));
    }
    loglik = loglik + ll;
  }
  const double scale = static_cast<double>(n_total) / static_cast<double>(x_batch.rows() * mc);
  ElboTerms out;
  out.loglik = scale * loglik;
  out.kl = kl_on_tape(q, vars);
  out.elbo = out.loglik - out.kl;
  return out;
}

double elbo_estimate(const BayesNet& net, const VariationalState& q, const Matrix& x_batch, const Matrix& y_batch,
                     Index n_total, Index mc_samples, CounterRng& rng) {
  const ElboNoise noise = sample_elbo_noise(net, q, x_batch.rows(), mc_samples, rng);
  Tape tape;
  const StateVars vars = bind_state(tape, q);
  return elbo_on_tape(net, q, vars, x_batch, y_batch, n_total, noise).elbo.scalar();
}

Weights mean_weights(const VariationalState& q) {
  Weights w;
  w.v = q.mean;
  w.bias = q.bias;
  return w;
}

Weights sample_weights(const BayesNet& net, const VariationalState& q, CounterRng& rng) {
  Weights w;
  w.bias = q.bias;
  for (Index g = 0; g < q.group_count(); ++g) {
    const auto gi = static_cast<std::size_t>(g);
    const auto& fam = q.family[gi];
    const Matrix& mu = q.mean[gi];
    switch (fam.kind) {
      case FamilyKind::PointMass: w.v.push_back(mu); break;
      case FamilyKind::Mixture: {
        Matrix v = mu;
        for (Index i = 0; i < v.rows(); ++i)
          if (!rng.bernoulli(fam.keep_prob)) v.row(i).setZero();
        w.v.push_back(std::move(v));
        break;
      }
      case FamilyKind::Gaussian: {
        const Matrix eps = rng.normal_matrix(mu.rows(), mu.cols());
        if (!fam.full_covariance) {
          w.v.push_back(mu + q.log_std[gi].array().exp().matrix().cwiseProduct(eps));
        } else {
          Matrix v = mu;
          for (Index k = 0; k < mu.cols(); ++k) {
            const Matrix& a = q.chol[gi][static_cast<std::size_t>(k)];
            Matrix l = a.triangularView<Eigen::StrictlyLower>();
            l.diagonal() = a.diagonal().array().exp().matrix();
            v.col(k) += l * eps.col(k);
          }
          w.v.push_back(std::move(v));
        }
        break;
      }
    }
    (void)net;
  }
  return w;
}

TrainResult train(const BayesNet& net, VariationalState q, const Matrix& x, const Matrix& y, const TrainConfig& cfg) {
  require_shape(x.rows() == y.rows(), "train data", x.rows(), x.cols(), y.rows(), y.cols());
  if (x.rows() < 1) throw Error("train: empty dataset");
  if (cfg.batch < 1 || cfg.mc_samples < 1 || cfg.steps < 0) throw Error("train: batch, mc_samples must be >= 1");
  const Index n = x.rows();
  const Index batch = std::min(cfg.batch, n);
  CounterRng order_rng(cfg.seed, 1);
  CounterRng noise_rng(cfg.seed, 2);

  auto params = q.parameters();
  const auto names = q.parameter_names();
  std::vector<Matrix> m1, m2;
  for (const Matrix* p : params) {
    m1.push_back(Matrix::Zero(p->rows(), p->cols()));
    m2.push_back(Matrix::Zero(p->rows(), p->cols()));
  }

  TrainResult result;
  result.trace.reserve(static_cast<std::size_t>(cfg.steps));
  std::vector<Index> perm;
  Index cursor = n;
  Matrix xb(batch, x.cols());
  Matrix yb(batch, y.cols());
  for (Index step = 0; step < cfg.steps; ++step) {
    if (cursor + batch > n) {
      perm = order_rng.permutation(n);
      cursor = 0;
    }
    for (Index i = 0; i < batch; ++i) {
      const Index row = perm[static_cast<std::size_t>(cursor + i)];
      xb.row(i) = x.row(row);
      yb.row(i) = y.row(row);
    }
    cursor += batch;

    const ElboNoise noise = sample_elbo_noise(net, q, batch, cfg.mc_samples, noise_rng);
    Tape tape;
    const StateVars vars = bind_state(tape, q);
    const ElboTerms terms = elbo_on_tape(net, q, vars, xb, yb, n, noise);
    const double ll = terms.loglik.scalar();
    const double kl = terms.kl.scalar();
    if (!std::isfinite(ll)) throw TrainingError("train: non-finite loss at step " + std::to_string(step) + " in term 'loglik'");
    if (!std::isfinite(kl)) throw TrainingError("train: non-finite loss at step " + std::to_string(step) + " in term 'kl'");
    result.trace.push_back({step, kl - ll, kl, ll});

    const Var loss = (-1.0 / static_cast<double>(n)) * terms.elbo;
    const auto grads = tape.gradient(loss, std::span<const Var>(vars.flat));
    const double lr = cfg.lr * std::pow(cfg.decay_rate, static_cast<double>(step) / static_cast<double>(cfg.decay_steps));
    const double t = static_cast<double>(step + 1);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
      const Matrix& g = grads[k];
      if (!g.allFinite()) {
        throw TrainingError("train: non-finite gradient at step " + std::to_string(step) + " for '" + names[k] + "'");
      }
      Matrix& p = *params[k];
      const bool prox = cfg.proximal_lasso && k < q.mean.size() && q.prior[k].kind == PriorKind::GroupLasso;
      const double shrink = prox ? q.prior[k].lambda / static_cast<double>(n) : 0.0;
      Matrix gs = g;
      if (prox) {
        for (Index r = 0; r < p.rows(); ++r) {
          const double norm = p.row(r).norm();
          if (norm > 0.0) gs.row(r) -= (shrink / norm) * p.row(r);
        }
      }
      m1[k] = cfg.beta1 * m1[k] + (1.0 - cfg.beta1) * gs;
      m2[k] = cfg.beta2 * m2[k] + (1.0 - cfg.beta2) * gs.cwiseAbs2();
      const Matrix scale = ((m2[k].array() / c2).sqrt() + cfg.adam_eps).matrix();
      p.array() -= lr * (m1[k].array() / c1) / scale.array();
      if (prox && step >= cfg.lasso_warmup) {
        for (Index r = 0; r < p.rows(); ++r) {
          const double norm = p.row(r).norm();
          const double rms = std::sqrt(scale.row(r).squaredNorm() / static_cast<double>(scale.cols()));
          const double thr = lr * shrink / rms;
          p.row(r) *= norm > thr ? 1.0 - thr / norm : 0.0;
        }
      }
    }
  }
  result.state = std::move(q);
  return result;
}

std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream out;
  out << "step,neg_elbo,kl,loglik\n";
  for (const auto& r : trace) out << r.step << "," << fmt(r.neg_elbo) << "," << fmt(r.kl) << "," << fmt(r.loglik) << "\n";
  return out.str();
}

Prediction predict(const BayesNet& net, const VariationalState& q, const Matrix& x, const PredictOptions& options) {
  if (options.mc_samples < 1) throw Error("predict: mc_samples must be >= 1");
  Prediction p;
  p.mean = Matrix::Zero(x.rows(), net.output_dim());
  Matrix sq = Matrix::Zero(x.rows(), net.output_dim());
  for (Index s = 0; s < options.mc_samples; ++s) {
    CounterRng rng(options.seed, static_cast<std::uint64_t>(s));
    Weights w = sample_weights(net, q, rng);
    for (Index g = 0; g < net.group_count(); ++g) {
      const auto& node = net.group_node(g);
      w.offset_noise.push_back(has_offset(node) ? rng.normal_matrix(x.rows(), node.fb.d) : Matrix());
    }
    Matrix f = forward(net, x, w);
    p.mean += f;
    sq += f.cwiseAbs2();
    if (options.keep_draws) p.draws.push_back(std::move(f));
  }
  const double s = static_cast<double>(options.mc_samples);
  p.mean /= s;
  p.variance = (sq / s - p.mean.cwiseAbs2()).cwiseMax(0.0);
  if (options.include_noise && q.likelihood.kind == LikelihoodKind::Gaussian) p.variance.array() += q.noise_var();
  return p;
}

}  // namespace bnnblocks
