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
#include "bnnblocks/linalg.hpp"

#include <algorithm>
#include <string>

namespace bnnblocks {

void require_symmetric(const Matrix& k, std::string_view op) {
  if (k.rows() != k.cols()) {
    throw ShapeError(std::string(op) + ": expected a square matrix, got " + shape_string(k.rows(), k.cols()));
  }
  const double scale = k.size() == 0 ? 0.0 : k.cwiseAbs().maxCoeff();
  const double asym = k.size() == 0 ? 0.0 : (k - k.transpose()).cwiseAbs().maxCoeff();
  if (!(asym <= 1e-12 * scale)) {
    throw Error(std::string(op) + ": matrix is not symmetric (max |K - Kᵀ| = " + std::to_string(asym) + ")");
  }
}

Cholesky jittered_cholesky(const Matrix& k, double jitter) {
  require_symmetric(k, "cholesky");
  if (!k.allFinite()) throw FactorizationError("cholesky: matrix has non-finite entries");
  double j = jitter;
  while (true) {
    Matrix reg = k;
    reg.diagonal().array() += j;
    Eigen::LLT<Matrix> llt(reg);
    if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0) {
      return Cholesky{llt.matrixL(), j};
    }
    if (j >= kJitterMax) break;
    j = j <= 0.0 ? kJitterStart : std::min(j * 10.0, kJitterMax);
  }
  throw FactorizationError("cholesky: matrix not positive definite after jitter " + std::to_string(kJitterMax));
}

Matrix chol_inverse_sqrt(const Matrix& k, double jitter) {
  const Cholesky c = jittered_cholesky(k, jitter);
  const Index n = k.rows();
  return c.lower.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
}

Matrix spd_solve(const Matrix& k, const Matrix& b) {
  require_shape(k.rows() == b.rows(), "spd_solve", k.rows(), k.cols(), b.rows(), b.cols());
  const Cholesky c = jittered_cholesky(k);
  Matrix y = c.lower.triangularView<Eigen::Lower>().solve(b);
  return c.lower.transpose().triangularView<Eigen::Upper>().solve(y);
}

double spd_log_det(const Matrix& k) {
  const Cholesky c = jittered_cholesky(k);
  return 2.0 * c.lower.diagonal().array().log().sum();
}

}  // namespace bnnblocks
