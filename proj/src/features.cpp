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
#include "bnnblocks/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "bnnblocks/linalg.hpp"
#include "bnnblocks/rng.hpp"

namespace bnnblocks {
namespace {

Var clamp_nonnegative(const Var& a) {
  return a.tape().record(a.value().cwiseMax(0.0), {a}, [a](const Matrix& g, Tape& tape) {
    tape.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
  });
}

Matrix squared_distances(const Matrix& a, const Matrix& b) {
  Matrix d = (-2.0 * a * b.transpose()).colwise() + a.rowwise().squaredNorm();
  d.rowwise() += b.rowwise().squaredNorm().transpose();
  return d.cwiseMax(0.0);
}

// Derivative of the arc-cosine kernel in its first argument.
Vector arc_cosine_gradient(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return Vector::Zero(a.size());
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  const double theta = std::acos(c);
  return (nb * std::sin(theta) / na * a + (std::numbers::pi - theta) * b) / (2.0 * std::numbers::pi);
}

}  // namespace

RandomFeatureBlock::RandomFeatureBlock(Index d_in, Index r, Activation sigma, std::uint64_t seed, double rho,
                                       bool random_bias)
    : sigma_(sigma), rho_(rho > 0.0 ? rho : 1.0 / std::sqrt(static_cast<double>(d_in))), seed_(seed) {
  if (d_in < 1 || r < 1) throw Error("random feature block: d_in and r must be positive");
  CounterRng rng(seed);
  w_ = rho_ * rng.normal_matrix(d_in, r);
  if (random_bias) bias_ = rng.split(1).normal_matrix(r, 1);
}

RandomFeatureBlock::RandomFeatureBlock(Matrix w, Vector bias, Activation sigma, std::uint64_t seed, double rho)
    : w_(std::move(w)), bias_(std::move(bias)), sigma_(sigma), rho_(rho), seed_(seed) {
  if (bias_.size() != 0 && bias_.size() != w_.cols()) {
    throw ShapeError("random feature block: bias length " + std::to_string(bias_.size()) + " does not match r = " +
                     std::to_string(w_.cols()));
  }
}

Matrix RandomFeatureBlock::features(const Matrix& x) const {
  require_shape(x.cols() == w_.rows(), "random feature block", x.rows(), x.cols(), w_.rows(), w_.cols());
  Matrix pre = x * w_;
  if (bias_.size() != 0) pre.rowwise() += bias_.transpose();
  return apply(sigma_, pre) / std::sqrt(static_cast<double>(w_.cols()));
}

Var RandomFeatureBlock::features(const Var& x) const {
  require_shape(x.cols() == w_.rows(), "random feature block", x.rows(), x.cols(), w_.rows(), w_.cols());
  Var pre = matmul(x, w_);
  if (bias_.size() != 0) pre = add_row(pre, x.tape().constant(bias_.transpose()));
  return (1.0 / std::sqrt(static_cast<double>(w_.cols()))) * apply(sigma_, pre);
}

std::string to_string(const KernelSpec& k) {
  switch (k.kind) {
    case KernelKind::ArcCosine1: return "arccos";
    case KernelKind::Linear: return "linear";
    case KernelKind::EmpiricalRF: return "empirical";
    case KernelKind::RBF: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "rbf:%.17g", k.lengthscale);
      return buf;
    }
  }
  return "rbf";
}

KernelSpec parse_kernel(std::string_view text) {
  if (text == "arccos") return KernelSpec::arc_cosine();
  if (text == "linear") return KernelSpec::linear();
  if (text.substr(0, 3) == "rbf") {
    double ls = 1.0;
    if (text.size() > 3) {
      if (text[3] != ':') throw Error("kernel: malformed '" + std::string(text) + "'");
      try {
        ls = std::stod(std::string(text.substr(4)));
      } catch (const std::exception&) {
        throw Error("kernel: bad lengthscale in '" + std::string(text) + "'");
      }
    }
    if (!(ls > 0.0)) throw Error("kernel: lengthscale must be positive");
    return KernelSpec::rbf(ls);
  }
  throw Error("kernel: unknown kernel '" + std::string(text) + "'");
}

double arc_cosine_kernel(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  require_shape(a.size() == b.size(), "arc_cosine_kernel", a.size(), 1, b.size(), 1);
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  const double theta = std::acos(c);
  return na * nb / (2.0 * std::numbers::pi) * (std::sin(theta) + (std::numbers::pi - theta) * c);
}

Matrix kernel_matrix(const KernelSpec& k, const Matrix& a, const Matrix& b) {
  require_shape(a.cols() == b.cols(), "kernel_matrix", a.rows(), a.cols(), b.rows(), b.cols());
  switch (k.kind) {
    case KernelKind::Linear: return a * b.transpose();
    case KernelKind::RBF: return (squared_distances(a, b) / (-2.0 * k.lengthscale * k.lengthscale)).array().exp();
    case KernelKind::EmpiricalRF: {
      if (!k.block) throw Error("kernel_matrix: empirical kernel without a random feature block");
      return k.block->features(a) * k.block->features(b).transpose();
    }
    case KernelKind::ArcCosine1: {
      Matrix out(a.rows(), b.rows());
      for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < b.rows(); ++j) out(i, j) = arc_cosine_kernel(a.row(i).transpose(), b.row(j).transpose());
      return out;
    }
  }
  return {};
}

Var kernel_matrix(const KernelSpec& k, const Var& a, const Matrix& b) {
  require_shape(a.cols() == b.cols(), "kernel_matrix", a.rows(), a.cols(), b.rows(), b.cols());
  Tape& tape = a.tape();
  switch (k.kind) {
    case KernelKind::Linear: return matmul(a, Matrix(b.transpose()));
    case KernelKind::EmpiricalRF: {
      if (!k.block) throw Error("kernel_matrix: empirical kernel without a random feature block");
      return matmul(k.block->features(a), Matrix(k.block->features(b).transpose()));
    }
    case KernelKind::RBF: {
      const double inv_l2 = 1.0 / (k.lengthscale * k.lengthscale);
      Matrix kv = kernel_matrix(k, a.value(), b);
      const int id = static_cast<int>(tape.size());
      return tape.record(std::move(kv), {a}, [a, b, id, inv_l2](const Matrix& g, Tape& t) {
        const Matrix gk = g.cwiseProduct(t.value(id));
        // d/dx_i of exp(-|x_i - z_j|^2 / 2l^2) = -K_ij (x_i - z_j) / l^2
        Matrix ga = (gk * b - (gk.rowwise().sum().asDiagonal() * a.value())) * inv_l2;
        t.accumulate(a, ga);
      });
    }
    case KernelKind::ArcCosine1: {
      Matrix kv = kernel_matrix(k, a.value(), b);
      return tape.record(std::move(kv), {a}, [a, b](const Matrix& g, Tape& t) {
        Matrix ga = Matrix::Zero(a.rows(), a.cols());
        for (Index i = 0; i < a.rows(); ++i) {
          const Vector ai = a.value().row(i).transpose();
          for (Index j = 0; j < b.rows(); ++j) {
            if (g(i, j) != 0.0) ga.row(i) += g(i, j) * arc_cosine_gradient(ai, b.row(j).transpose()).transpose();
          }
        }
        t.accumulate(a, ga);
      });
    }
  }
  throw Error("kernel_matrix: unsupported kernel");
}

InducingPointBlock::InducingPointBlock(KernelSpec kernel, Matrix z, double jitter)
    : kernel_(std::move(kernel)), z_(std::move(z)) {
  if (z_.rows() < 1) throw Error("inducing point block: no inducing points");
  const Cholesky c = jittered_cholesky(kernel_matrix(kernel_, z_, z_), jitter);
  lower_ = c.lower;
  jitter_ = c.jitter;
  const Index r = z_.rows();
  basis_ = lower_.triangularView<Eigen::Lower>().solve(Matrix::Identity(r, r)).transpose();
}

Matrix InducingPointBlock::features(const Matrix& x) const { return kernel_matrix(kernel_, x, z_) * basis_; }

Var InducingPointBlock::features(const Var& x) const { return matmul(kernel_matrix(kernel_, x, z_), basis_); }

Vector InducingPointBlock::residual_variance(const Matrix& x) const {
  Vector kxx(x.rows());
  for (Index i = 0; i < x.rows(); ++i) kxx(i) = kernel_matrix(kernel_, x.row(i), x.row(i))(0, 0);
  return (kxx - features(x).rowwise().squaredNorm()).cwiseMax(0.0);
}

Var InducingPointBlock::residual_variance(const Var& x) const {
  Tape& tape = x.tape();
  Var kxx;
  switch (kernel_.kind) {
    case KernelKind::RBF: kxx = tape.constant(Matrix::Ones(x.rows(), 1)); break;
    case KernelKind::Linear: kxx = row_sum(square(x)); break;
    case KernelKind::ArcCosine1: kxx = 0.5 * row_sum(square(x)); break;
    case KernelKind::EmpiricalRF: kxx = row_sum(square(kernel_.block->features(x))); break;
  }
  return clamp_nonnegative(kxx - row_sum(square(features(x))));
}

}  // namespace bnnblocks
