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

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace bnnblocks {

using Index = Eigen::Index;

template <class Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixT<double>;
using Vector = VectorT<double>;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

inline std::string shape_string(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

/// Throws ShapeError naming both operand shapes.
inline void require_shape(bool ok, std::string_view op, Index lr, Index lc, Index rr, Index rc) {
  if (!ok) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(lr, lc) + " and " +
                     shape_string(rr, rc));
  }
}

// ---------------------------------------------------------------------------
// Activations

enum class Activation { Identity, ReLU, Tanh, Erf, Sigmoid };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

template <class Scalar>
Scalar activate(Activation a, Scalar x) {
  using std::erf;
  using std::exp;
  using std::tanh;
  switch (a) {
    case Activation::Identity: return x;
    case Activation::ReLU: return x > Scalar(0) ? x : Scalar(0);
    case Activation::Tanh: return tanh(x);
    case Activation::Erf: return erf(x);
    case Activation::Sigmoid: return Scalar(1) / (Scalar(1) + exp(-x));
  }
  return x;
}

/// Derivative of the activation. ReLU'(0) is taken as 0.
template <class Scalar>
Scalar activate_derivative(Activation a, Scalar x) {
  using std::exp;
  using std::tanh;
  switch (a) {
    case Activation::Identity: return Scalar(1);
    case Activation::ReLU: return x > Scalar(0) ? Scalar(1) : Scalar(0);
    case Activation::Tanh: {
      const Scalar t = tanh(x);
      return Scalar(1) - t * t;
    }
    case Activation::Erf: return Scalar(1.1283791670955126) * exp(-x * x);  // 2/sqrt(pi)
    case Activation::Sigmoid: {
      const Scalar s = Scalar(1) / (Scalar(1) + exp(-x));
      return s * (Scalar(1) - s);
    }
  }
  return Scalar(1);
}

template <class Derived>
MatrixT<typename Derived::Scalar> apply(Activation a, const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (a == Activation::Identity) return x;
  return x.unaryExpr([a](Scalar v) { return activate(a, v); });
}

}  // namespace bnnblocks
