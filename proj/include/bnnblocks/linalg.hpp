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

#include "bnnblocks/core.hpp"

namespace bnnblocks {

class FactorizationError : public Error {
 public:
  using Error::Error;
};

/// Smallest nonzero jitter tried when the unregularized factorization fails.
inline constexpr double kJitterStart = 1e-10;
inline constexpr double kJitterMax = 1e-4;

struct Cholesky {
  Matrix lower;         // L with L Lᵀ = K + jitter·I
  double jitter = 0.0;  // jitter that was needed
};

/// Cholesky factor of symmetric K with jitter escalation: tries K + jitter·I,
/// then jitter 1e-10, 1e-9, ... up to 1e-4 (or ×10 from a nonzero start).
Cholesky jittered_cholesky(const Matrix& k, double jitter = 0.0);

/// M = L⁻¹ for the jittered Cholesky factor L, so that M·K·Mᵀ ≈ I.
Matrix chol_inverse_sqrt(const Matrix& k, double jitter = 0.0);

/// Throws unless K is square and symmetric up to 1e-12 relative to max |K|.
void require_symmetric(const Matrix& k, std::string_view op);

/// Solves K X = B for SPD K via the jittered Cholesky factor.
Matrix spd_solve(const Matrix& k, const Matrix& b);

/// log det of an SPD matrix.
double spd_log_det(const Matrix& k);

}  // namespace bnnblocks
