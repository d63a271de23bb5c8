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

// Matrix-valued reverse-mode differentiation.
//
// A tape is an append-only list of nodes; each node keeps its value and a
// closure that pushes the incoming adjoint to its parents. Nodes are appended
// after their parents, so a single reverse sweep visits every node once in
// reverse topological order. Tapes are built per forward pass and discarded.

#pragma once

#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bnnblocks/core.hpp"

namespace bnnblocks {

template <class Scalar>
class BasicTape;

template <class Scalar>
class BasicVar {
 public:
  using Mat = MatrixT<Scalar>;

  BasicVar() = default;

  const Mat& value() const { return tape_->value(id_); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Scalar scalar() const { return value()(0, 0); }
  BasicTape<Scalar>& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class BasicTape<Scalar>;
  BasicVar(BasicTape<Scalar>* tape, int id) : tape_(tape), id_(id) {}

  BasicTape<Scalar>* tape_ = nullptr;
  int id_ = -1;
};

template <class Scalar>
class BasicTape {
 public:
  using Mat = MatrixT<Scalar>;
  using Var = BasicVar<Scalar>;
  /// Receives dL/d(node value) and accumulates into the parents.
  using Backward = std::function<void(const Mat& adjoint, BasicTape& tape)>;

  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  /// Differentiable leaf.
  Var variable(Mat value) { return push(std::move(value), true, {}); }
  /// Leaf that never receives an adjoint.
  Var constant(Mat value) { return push(std::move(value), false, {}); }

  /// Appends the result of a primitive. The closure is dropped when no parent
  /// needs a gradient.
  Var record(Mat value, std::initializer_list<Var> parents, Backward backward) {
    bool needs = false;
    for (const Var& p : parents) {
      check_owner(p);
      needs = needs || nodes_[static_cast<std::size_t>(p.id_)].needs_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
  }

  Var record(Mat value, std::span<const Var> parents, Backward backward) {
    bool needs = false;
    for (const Var& p : parents) {
      check_owner(p);
      needs = needs || nodes_[static_cast<std::size_t>(p.id_)].needs_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
  }

  const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(const Var& v) const { return nodes_[static_cast<std::size_t>(v.id_)].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  template <class Derived>
  void accumulate(const Var& target, const Eigen::MatrixBase<Derived>& adjoint) {
    auto& node = nodes_[static_cast<std::size_t>(target.id_)];
    if (!node.needs_grad) return;
    Mat& acc = adjoints_[static_cast<std::size_t>(target.id_)];
    if (acc.size() == 0) {
      acc = adjoint;
    } else {
      acc += adjoint;
    }
  }

  /// d(output)/d(v) for every v in `wrt`. `output` must be 1x1.
  std::vector<Mat> gradient(const Var& output, std::span<const Var> wrt) {
    check_owner(output);
    if (output.rows() != 1 || output.cols() != 1) {
      throw Error("gradient: output must be scalar, got " + shape_string(output.rows(), output.cols()));
    }
    adjoints_.assign(nodes_.size(), Mat());
    adjoints_[static_cast<std::size_t>(output.id_)] = Mat::Ones(1, 1);
    for (int i = output.id_; i >= 0; --i) {
      auto& node = nodes_[static_cast<std::size_t>(i)];
      const Mat& adj = adjoints_[static_cast<std::size_t>(i)];
      if (adj.size() == 0 || !node.backward) continue;
      node.backward(adj, *this);
    }
    std::vector<Mat> out;
    out.reserve(wrt.size());
    for (const Var& v : wrt) {
      check_owner(v);
      Mat& adj = adjoints_[static_cast<std::size_t>(v.id_)];
      out.push_back(adj.size() == 0 ? Mat::Zero(v.rows(), v.cols()) : std::move(adj));
    }
    adjoints_.clear();
    return out;
  }

  std::vector<Mat> gradient(const Var& output, std::initializer_list<Var> wrt) {
    return gradient(output, std::span<const Var>(wrt.begin(), wrt.size()));
  }

 private:
  struct Node {
    Mat value;
    bool needs_grad;
    Backward backward;
  };

  Var push(Mat value, bool needs_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), needs_grad, std::move(backward)});
    return Var(this, static_cast<int>(nodes_.size() - 1));
  }

  void check_owner(const Var& v) const {
    if (v.tape_ != this) throw Error("autodiff: variable belongs to a different tape");
  }

  std::vector<Node> nodes_;
  std::vector<Mat> adjoints_;
};

using Tape = BasicTape<double>;
using Var = BasicVar<double>;

// ---------------------------------------------------------------------------
// Primitives

template <class Scalar>
BasicVar<Scalar> matmul(const BasicVar<Scalar>& a, const BasicVar<Scalar>& b) {
  require_shape(a.cols() == b.rows(), "matmul", a.rows(), a.cols(), b.rows(), b.cols());
  auto& t = a.tape();
  return t.record(a.value() * b.value(), {a, b}, [a, b](const auto& g, auto& tape) {
    if (tape.requires_grad(a)) tape.accumulate(a, g * b.value().transpose());
    if (tape.requires_grad(b)) tape.accumulate(b, a.value().transpose() * g);
  });
}

/// Product with a constant right operand.
template <class Scalar>
BasicVar<Scalar> matmul(const BasicVar<Scalar>& a, const MatrixT<Scalar>& b) {
  return matmul(a, a.tape().constant(b));
}

template <class Scalar>
BasicVar<Scalar> operator+(const BasicVar<Scalar>& a, const BasicVar<Scalar>& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add", a.rows(), a.cols(), b.rows(),
                b.cols());
  return a.tape().record(a.value() + b.value(), {a, b}, [a, b](const auto& g, auto& tape) {
    tape.accumulate(a, g);
    tape.accumulate(b, g);
  });
}

template <class Scalar>
BasicVar<Scalar> operator-(const BasicVar<Scalar>& a, const BasicVar<Scalar>& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a.rows(), a.cols(), b.rows(),
                b.cols());
  return a.tape().record(a.value() - b.value(), {a, b}, [a, b](const auto& g, auto& tape) {
    tape.accumulate(a, g);
    tape.accumulate(b, -g);
  });
}

template <class Scalar>
BasicVar<Scalar> operator-(const BasicVar<Scalar>& a) {
  return a.tape().record(-a.value(), {a}, [a](const auto& g, auto& tape) { tape.accumulate(a, -g); });
}

template <class Scalar>
BasicVar<Scalar> operator*(Scalar s, const BasicVar<Scalar>& a) {
  return a.tape().record(s * a.value(), {a}, [a, s](const auto& g, auto& tape) { tape.accumulate(a, s * g); });
}

template <class Scalar>
BasicVar<Scalar> operator*(const BasicVar<Scalar>& a, Scalar s) {
  return s * a;
}

/// a + c for a constant scalar c.
template <class Scalar>
BasicVar<Scalar> add_constant(const BasicVar<Scalar>& a, Scalar c) {
  return a.tape().record((a.value().array() + c).matrix(), {a},
                         [a](const auto& g, auto& tape) { tape.accumulate(a, g); });
}

/// Adds a 1 x c row to every row of a.
template <class Scalar>
BasicVar<Scalar> add_row(const BasicVar<Scalar>& a, const BasicVar<Scalar>& row) {
  require_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row", a.rows(), a.cols(), row.rows(),
                row.cols());
  MatrixT<Scalar> v = a.value().rowwise() + row.value().row(0);
  return a.tape().record(std::move(v), {a, row}, [a, row](const auto& g, auto& tape) {
    tape.accumulate(a, g);
    if (tape.requires_grad(row)) tape.accumulate(row, g.colwise().sum());
  });
}

/// a * s where s is a 1x1 variable.
template <class Scalar>
BasicVar<Scalar> mul_scalar(const BasicVar<Scalar>& a, const BasicVar<Scalar>& s) {
  require_shape(s.rows() == 1 && s.cols() == 1, "mul_scalar", a.rows(), a.cols(), s.rows(), s.cols());
  return a.tape().record(a.value() * s.scalar(), {a, s}, [a, s](const auto& g, auto& tape) {
    if (tape.requires_grad(a)) tape.accumulate(a, g * s.scalar());
    if (tape.requires_grad(s)) {
      MatrixT<Scalar> gs(1, 1);
      gs(0, 0) = (g.array() * a.value().array()).sum();
      tape.accumulate(s, gs);
    }
  });
}

template <class Scalar>
BasicVar<Scalar> cwise_product(const BasicVar<Scalar>& a, const BasicVar<Scalar>& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "cwise_product", a.rows(), a.cols(), b.rows(),
                b.cols());
  return a.tape().record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](const auto& g, auto& tape) {
    if (tape.requires_grad(a)) tape.accumulate(a, g.cwiseProduct(b.value()));
    if (tape.requires_grad(b)) tape.accumulate(b, g.cwiseProduct(a.value()));
  });
}

template <class Scalar>
BasicVar<Scalar> cwise_product(const BasicVar<Scalar>& a, const MatrixT<Scalar>& mask) {
  return cwise_product(a, a.tape().constant(mask));
}

template <class Scalar>
BasicVar<Scalar> apply(Activation act, const BasicVar<Scalar>& a) {
  if (act == Activation::Identity) return a;
  return a.tape().record(apply(act, a.value()), {a}, [a, act](const auto& g, auto& tape) {
    tape.accumulate(a, g.cwiseProduct(a.value().unaryExpr(
                           [act](Scalar x) { return activate_derivative(act, x); })));
  });
}

template <class Scalar>
BasicVar<Scalar> exp(const BasicVar<Scalar>& a) {
  MatrixT<Scalar> v = a.value().array().exp().matrix();
  const int id = a.tape().size();  // index of the node about to be recorded
  return a.tape().record(std::move(v), {a}, [a, id](const auto& g, auto& tape) {
    tape.accumulate(a, g.cwiseProduct(tape.value(id)));
  });
}

template <class Scalar>
BasicVar<Scalar> log(const BasicVar<Scalar>& a) {
  return a.tape().record(a.value().array().log().matrix(), {a}, [a](const auto& g, auto& tape) {
    tape.accumulate(a, g.cwiseQuotient(a.value()));
  });
}

template <class Scalar>
BasicVar<Scalar> square(const BasicVar<Scalar>& a) {
  return a.tape().record(a.value().array().square().matrix(), {a}, [a](const auto& g, auto& tape) {
    tape.accumulate(a, Scalar(2) * g.cwiseProduct(a.value()));
  });
}

/// Sum of all entries, as a 1x1.
template <class Scalar>
BasicVar<Scalar> sum(const BasicVar<Scalar>& a) {
  MatrixT<Scalar> v(1, 1);
  v(0, 0) = a.value().sum();
  return a.tape().record(std::move(v), {a}, [a](const auto& g, auto& tape) {
    tape.accumulate(a, MatrixT<Scalar>::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

/// Sum across columns: n x c -> n x 1.
template <class Scalar>
BasicVar<Scalar> row_sum(const BasicVar<Scalar>& a) {
  return a.tape().record(a.value().rowwise().sum(), {a}, [a](const auto& g, auto& tape) {
    tape.accumulate(a, g.replicate(1, a.cols()));
  });
}

/// Row-wise log-sum-exp: n x c -> n x 1.
template <class Scalar>
BasicVar<Scalar> log_sum_exp(const BasicVar<Scalar>& a) {
  const MatrixT<Scalar>& x = a.value();
  VectorT<Scalar> m = x.rowwise().maxCoeff();
  MatrixT<Scalar> v = ((x.colwise() - m).array().exp().rowwise().sum().log()).matrix() + m;
  const int id = a.tape().size();
  return a.tape().record(std::move(v), {a}, [a, id](const auto& g, auto& tape) {
    const auto& lse = tape.value(id);
    MatrixT<Scalar> softmax = (a.value().colwise() - lse.col(0)).array().exp().matrix();
    tape.accumulate(a, (softmax.array().colwise() * g.col(0).array()).matrix());
  });
}

/// Euclidean norm of every row: r x c -> r x 1. The subgradient at a zero row is 0.
template <class Scalar>
BasicVar<Scalar> row_norms(const BasicVar<Scalar>& a) {
  return a.tape().record(a.value().rowwise().norm(), {a}, [a](const auto& g, auto& tape) {
    const MatrixT<Scalar>& x = a.value();
    MatrixT<Scalar> ga(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
      const Scalar n = x.row(i).norm();
      if (n > Scalar(0)) {
        ga.row(i) = g(i, 0) / n * x.row(i);
      } else {
        ga.row(i).setZero();
      }
    }
    tape.accumulate(a, ga);
  });
}

/// Strict lower triangle of a square matrix plus exp of its diagonal; maps an
/// unconstrained square to a Cholesky factor with positive diagonal.
template <class Scalar>
BasicVar<Scalar> lower_factor(const BasicVar<Scalar>& a) {
  require_shape(a.rows() == a.cols(), "lower_factor", a.rows(), a.cols(), a.cols(), a.rows());
  MatrixT<Scalar> v = a.value().template triangularView<Eigen::StrictlyLower>();
  v.diagonal() = a.value().diagonal().array().exp().matrix();
  return a.tape().record(std::move(v), {a}, [a](const auto& g, auto& tape) {
    MatrixT<Scalar> ga = g.template triangularView<Eigen::StrictlyLower>();
    ga.diagonal() = g.diagonal().cwiseProduct(a.value().diagonal().array().exp().matrix());
    tape.accumulate(a, ga);
  });
}

/// Horizontal concatenation.
template <class Scalar>
BasicVar<Scalar> hcat(std::span<const BasicVar<Scalar>> parts) {
  if (parts.empty()) throw Error("hcat: no operands");
  if (parts.size() == 1) return parts[0];
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const auto& p : parts) {
    require_shape(p.rows() == rows, "hcat", rows, parts[0].cols(), p.rows(), p.cols());
    cols += p.cols();
  }
  MatrixT<Scalar> v(rows, cols);
  Index off = 0;
  for (const auto& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  std::vector<BasicVar<Scalar>> keep(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(v), parts, [keep](const auto& g, auto& tape) {
    Index o = 0;
    for (const auto& p : keep) {
      if (tape.requires_grad(p)) tape.accumulate(p, g.middleCols(o, p.cols()));
      o += p.cols();
    }
  });
}

template <class Scalar>
BasicVar<Scalar> slice_cols(const BasicVar<Scalar>& a, Index start, Index count) {
  require_shape(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols", a.rows(), a.cols(),
                start, count);
  if (start == 0 && count == a.cols()) return a;
  return a.tape().record(a.value().middleCols(start, count), {a}, [a, start, count](const auto& g, auto& tape) {
    MatrixT<Scalar> ga = MatrixT<Scalar>::Zero(a.rows(), a.cols());
    ga.middleCols(start, count) = g;
    tape.accumulate(a, ga);
  });
}

template <class Scalar>
BasicVar<Scalar> slice_rows(const BasicVar<Scalar>& a, Index start, Index count) {
  require_shape(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows", a.rows(), a.cols(),
                start, count);
  if (start == 0 && count == a.rows()) return a;
  return a.tape().record(a.value().middleRows(start, count), {a}, [a, start, count](const auto& g, auto& tape) {
    MatrixT<Scalar> ga = MatrixT<Scalar>::Zero(a.rows(), a.cols());
    ga.middleRows(start, count) = g;
    tape.accumulate(a, ga);
  });
}

/// Entry (i, labels[i]) of every row: n x c -> n x 1.
template <class Scalar>
BasicVar<Scalar> pick(const BasicVar<Scalar>& a, std::span<const Index> labels) {
  require_shape(static_cast<Index>(labels.size()) == a.rows(), "pick", a.rows(), a.cols(),
                static_cast<Index>(labels.size()), 1);
  MatrixT<Scalar> v(a.rows(), 1);
  for (Index i = 0; i < a.rows(); ++i) {
    const Index c = labels[static_cast<std::size_t>(i)];
    if (c < 0 || c >= a.cols()) throw Error("pick: label " + std::to_string(c) + " out of range");
    v(i, 0) = a.value()(i, c);
  }
  std::vector<Index> idx(labels.begin(), labels.end());
  return a.tape().record(std::move(v), {a}, [a, idx](const auto& g, auto& tape) {
    MatrixT<Scalar> ga = MatrixT<Scalar>::Zero(a.rows(), a.cols());
    for (Index i = 0; i < a.rows(); ++i) ga(i, idx[static_cast<std::size_t>(i)]) = g(i, 0);
    tape.accumulate(a, ga);
  });
}

}  // namespace bnnblocks
