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
#include "bnnblocks/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "bnnblocks/linalg.hpp"
#include "bnnblocks/network.hpp"
#include "bnnblocks/rng.hpp"

namespace bnnblocks {
namespace {

constexpr int kQuadratureNodes = 96;

Matrix solve_spd_or_lu(const Matrix& k, const Matrix& b) {
  Eigen::LLT<Matrix> llt(k);
  if (llt.info() == Eigen::Success) return llt.solve(b);
  return k.partialPivLu().solve(b);
}

double condition_number(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(s.size() - 1) <= 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / s(s.size() - 1);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double empirical_kernel(const RandomFeatureBlock& block, const Vector& a, const Vector& b) {
  require_shape(a.size() == block.input_dim() && b.size() == block.input_dim(), "empirical_kernel", a.size(), 1,
                b.size(), 1);
  const Matrix fa = block.features(a.transpose());
  const Matrix fb = block.features(b.transpose());
  return fa.row(0).dot(fb.row(0));
}

double arc_cosine_closed_form(const Vector& a, const Vector& b) {
  require_shape(a.size() == b.size(), "arc_cosine_closed_form", a.size(), 1, b.size(), 1);
  if (a.norm() == 0.0 || b.norm() == 0.0) throw Error("arc_cosine_closed_form: zero-norm input");
  return arc_cosine_kernel(a, b);
}

void gauss_hermite(int n, Vector& nodes, Vector& weights) {
  // Golub-Welsch: eigen-decomposition of the symmetric Jacobi matrix.
  Matrix j = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) j(k, k - 1) = j(k - 1, k) = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(j);
  nodes = es.eigenvalues();
  weights = std::sqrt(std::numbers::pi) * es.eigenvectors().row(0).transpose().array().square();
}

double expected_kernel(Activation sigma, const Vector& a, const Vector& b, double rho) {
  require_shape(a.size() == b.size(), "expected_kernel", a.size(), 1, b.size(), 1);
  const double r2 = rho * rho;
  const double saa = r2 * a.squaredNorm();
  const double sbb = r2 * b.squaredNorm();
  const double sab = r2 * a.dot(b);
  switch (sigma) {
    case Activation::Identity: return sab;
    case Activation::ReLU: return r2 * arc_cosine_kernel(a, b);
    case Activation::Erf:
      return 2.0 / std::numbers::pi * std::asin(2.0 * sab / std::sqrt((1.0 + 2.0 * saa) * (1.0 + 2.0 * sbb)));
    case Activation::Tanh:
    case Activation::Sigmoid: break;
  }
  static const auto rule = [] {
    std::pair<Vector, Vector> r;
    gauss_hermite(kQuadratureNodes, r.first, r.second);
    return r;
  }();
  const Vector& x = rule.first;
  const Vector& w = rule.second;
  const double sa = std::sqrt(saa);
  const double sb = std::sqrt(sbb);
  const double c = sa > 0.0 && sb > 0.0 ? std::clamp(sab / (sa * sb), -1.0, 1.0) : 0.0;
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  double total = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    const double z1 = std::numbers::sqrt2 * x(i);
    const double fu = activate(sigma, sa * z1);
    for (int k = 0; k < x.size(); ++k) {
      const double z2 = std::numbers::sqrt2 * x(k);
      total += w(i) * w(k) * fu * activate(sigma, sb * (c * z1 + s * z2));
    }
  }
  return total / std::numbers::pi;
}

std::vector<std::pair<Vector, Vector>> sample_pairs(Index d, Index n_pairs, std::uint64_t seed) {
  CounterRng rng(seed);
  auto point = [&] {
    Vector v(d);
    for (Index i = 0; i < d; ++i) v(i) = rng.normal();
    const double radius = std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
    return Vector(v.normalized() * radius);
  };
  std::vector<std::pair<Vector, Vector>> pairs;
  while (static_cast<Index>(pairs.size()) < n_pairs) {
    Vector a = point();
    Vector b = point();
    const double c = a.dot(b) / (a.norm() * b.norm());
    if (std::abs(c) <= 1.0 - 1e-6) pairs.emplace_back(std::move(a), std::move(b));
  }
  return pairs;
}

std::vector<ConcentrationRow> concentration_experiment(const ConcentrationConfig& cfg) {
  const double rho = cfg.rho > 0.0 ? cfg.rho : 1.0 / std::sqrt(static_cast<double>(cfg.d));
  const auto pairs = sample_pairs(cfg.d, cfg.n_pairs, cfg.pair_seed);
  std::vector<double> reference;
  reference.reserve(pairs.size());
  for (const auto& [a, b] : pairs) reference.push_back(expected_kernel(cfg.sigma, a, b, rho));
  return concentration_experiment(cfg, pairs, reference);
}

std::vector<ConcentrationRow> concentration_experiment(const ConcentrationConfig& cfg,
                                                       const std::vector<std::pair<Vector, Vector>>& pairs,
                                                       const std::vector<double>& reference) {
  if (reference.size() != pairs.size()) throw Error("concentration_experiment: one reference value per pair");
  const double rho = cfg.rho > 0.0 ? cfg.rho : 1.0 / std::sqrt(static_cast<double>(cfg.d));
  const auto np = static_cast<Index>(pairs.size());
  Matrix a(np, cfg.d);
  Matrix b(np, cfg.d);
  for (Index i = 0; i < np; ++i) {
    a.row(i) = pairs[static_cast<std::size_t>(i)].first.transpose();
    b.row(i) = pairs[static_cast<std::size_t>(i)].second.transpose();
  }
  std::vector<ConcentrationRow> rows;
  for (std::uint64_t seed : cfg.seeds) {
    for (Index r : cfg.r_grid) {
      const RandomFeatureBlock block(cfg.d, r, cfg.sigma, CounterRng(seed, static_cast<std::uint64_t>(r)).next_u64(), rho);
      const Matrix fa = block.features(a);
      const Matrix fb = block.features(b);
      double sup = 0.0;
      for (Index i = 0; i < np; ++i) {
        sup = std::max(sup, std::abs(fa.row(i).dot(fb.row(i)) - reference[static_cast<std::size_t>(i)]));
      }
      rows.push_back({r, seed, sup});
    }
  }
  return rows;
}

std::vector<double> mean_sup_error(const std::vector<ConcentrationRow>& rows, const std::vector<Index>& r_grid) {
  std::vector<double> out;
  for (Index r : r_grid) {
    double sum = 0.0;
    int count = 0;
    for (const auto& row : rows) {
      if (row.r == r) {
        sum += row.sup_error;
        ++count;
      }
    }
    out.push_back(count ? sum / count : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

double log_log_slope(const std::vector<Index>& r_grid, const std::vector<double>& errors) {
  if (r_grid.size() != errors.size() || r_grid.size() < 2) throw Error("log_log_slope: need >= 2 matched points");
  const auto n = static_cast<double>(r_grid.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < r_grid.size(); ++i) {
    const double x = std::log(static_cast<double>(r_grid[i]));
    const double y = std::log(errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::string concentration_csv(const std::vector<ConcentrationRow>& rows) {
  std::ostringstream out;
  out << "r,seed,sup_error\n";
  for (const auto& row : rows) out << row.r << "," << row.seed << "," << fmt(row.sup_error) << "\n";
  return out.str();
}

PosteriorMoments inducing_predictive(const Matrix& kff, const Matrix& kfz, const Matrix& kzz, const Vector& m,
                                     const Matrix& s) {
  const Matrix alpha = solve_spd_or_lu(kzz, kfz.transpose());  // K_ZZ^{-1} K_ZF
  PosteriorMoments out;
  out.mean = alpha.transpose() * m;
  out.cov = kff - alpha.transpose() * (kzz - s) * alpha;
  return out;
}

namespace {

double discrepancy(const PosteriorMoments& a, const PosteriorMoments& b) {
  return std::max((a.mean - b.mean).cwiseAbs().maxCoeff(), (a.cov - b.cov).cwiseAbs().maxCoeff());
}

}  // namespace

EquivalenceResult random_feature_equivalence(const RandomFeatureBlock& block, const Matrix& f, const Matrix& z,
                                             const Vector& mu, const Matrix& sigma) {
  const Index r = block.feature_count();
  if (z.rows() != r) {
    throw ShapeError("random_feature_equivalence: need m = r = " + std::to_string(r) + " inducing inputs, got " +
                     std::to_string(z.rows()));
  }
  require_shape(mu.size() == r && sigma.rows() == r && sigma.cols() == r, "random_feature_equivalence", mu.size(), 1,
                sigma.rows(), sigma.cols());
  const Matrix phi_f = block.features(f);
  const Matrix phi_z = block.features(z);
  EquivalenceResult res;
  res.feature_side.mean = phi_f * mu;
  res.feature_side.cov = phi_f * sigma * phi_f.transpose();
  const Vector m = phi_z * mu;
  const Matrix s = phi_z * sigma * phi_z.transpose();
  res.inducing_side =
      inducing_predictive(phi_f * phi_f.transpose(), phi_f * phi_z.transpose(), phi_z * phi_z.transpose(), m, s);
  res.max_abs_discrepancy = discrepancy(res.feature_side, res.inducing_side);
  return res;
}

EquivalenceResult inducing_point_equivalence(const InducingPointBlock& block, const Matrix& f, const Vector& mu,
                                             const Matrix& sigma, bool with_offset) {
  const Index r = block.feature_count();
  require_shape(mu.size() == r && sigma.rows() == r && sigma.cols() == r, "inducing_point_equivalence", mu.size(), 1,
                sigma.rows(), sigma.cols());
  const Matrix& z = block.inducing_points();
  const Matrix kff = kernel_matrix(block.kernel(), f, f);
  const Matrix kfz = kernel_matrix(block.kernel(), f, z);
  Matrix kzz = kernel_matrix(block.kernel(), z, z);
  kzz.diagonal().array() += block.jitter();
  const Matrix& l = block.sqrt_factor();

  EquivalenceResult res;
  const Matrix psi = block.features(f);
  res.feature_side.mean = psi * mu;
  res.feature_side.cov = psi * sigma * psi.transpose();
  if (with_offset) res.feature_side.cov += kff - kfz * solve_spd_or_lu(kzz, kfz.transpose());
  res.inducing_side = inducing_predictive(kff, kfz, kzz, l * mu, l * sigma * l.transpose());
  res.max_abs_discrepancy = discrepancy(res.feature_side, res.inducing_side);
  return res;
}

std::vector<EquivalenceResult> equivalence_check(const EquivalenceConfig& cfg) {
  CounterRng rng(cfg.seed);
  std::vector<EquivalenceResult> out;
  auto random_posterior = [&](Vector& mu, Matrix& sigma) {
    mu = rng.normal_matrix(cfg.r, 1);
    const Matrix a = rng.normal_matrix(cfg.r, cfg.r);
    sigma = a * a.transpose() / static_cast<double>(cfg.r) + 0.1 * Matrix::Identity(cfg.r, cfg.r);
  };

  for (Index k = 0; k < cfg.instances; ++k) {
    NodeRecipe recipe;
    recipe.stages.push_back(FeatureStage{StageKind::RB, cfg.r, cfg.sigma});
    const BayesNet net =
        build_network(chain_skeleton(1, cfg.d_in), FeaturePolicy::uniform(chain_skeleton(1, cfg.d_in), recipe),
                      BuildOptions{BiasMode::None, rng.next_u64(), nullptr});
    const RandomFeatureBlock& block = net.node(1, 0).features[0].rb;
    const Matrix f = rng.normal_matrix(cfg.n, cfg.d_in);
    Matrix z;
    bool ok = false;
    for (int attempt = 0; attempt <= cfg.max_resamples && !ok; ++attempt) {
      z = rng.normal_matrix(cfg.r, cfg.d_in);
      ok = condition_number(block.features(z)) <= cfg.max_condition;
    }
    if (!ok) throw FactorizationError("equivalence_check: Φ(Z) ill-conditioned after resampling");
    Vector mu;
    Matrix sigma;
    random_posterior(mu, sigma);
    EquivalenceResult res = random_feature_equivalence(block, f, z, mu, sigma);
    res.name = "rf_" + std::to_string(k);
    out.push_back(std::move(res));
  }

  for (Index k = 0; k < cfg.instances; ++k) {
    const Matrix f = rng.normal_matrix(cfg.n, cfg.d_in);
    InducingPointBlock block;
    bool ok = false;
    for (int attempt = 0; attempt <= cfg.max_resamples && !ok; ++attempt) {
      try {
        block = InducingPointBlock(KernelSpec::rbf(cfg.rbf_lengthscale), rng.normal_matrix(cfg.r, cfg.d_in));
        ok = condition_number(block.sqrt_factor()) <= cfg.max_condition;
      } catch (const FactorizationError&) {
      }
    }
    if (!ok) throw FactorizationError("equivalence_check: K(Z, Z) singular after resampling");
    Vector mu;
    Matrix sigma;
    random_posterior(mu, sigma);
    EquivalenceResult res = inducing_point_equivalence(block, f, mu, sigma, true);
    res.name = "ipb_rbf_" + std::to_string(k);
    out.push_back(std::move(res));
  }
  return out;
}

std::string equivalence_csv(const std::vector<EquivalenceResult>& results) {
  std::ostringstream out;
  out << "case,max_abs_discrepancy\n";
  for (const auto& r : results) out << r.name << "," << fmt(r.max_abs_discrepancy) << "\n";
  return out.str();
}

}  // namespace bnnblocks
