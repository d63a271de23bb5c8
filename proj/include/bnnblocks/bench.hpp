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
// Benchmark data: the four synthetic regression functions on [0,1]^10,
// CSV ingestion, and evaluation metrics.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bnnblocks/core.hpp"

namespace bnnblocks {

/// Feature subsets use 0-based column indices in code and 1-based labels in files.
using Subset = std::vector<Index>;

std::string subset_label(const Subset& s);  // "1;2" for {0, 1}

struct Dataset {
  Matrix x;
  Vector y;
  std::vector<std::string> feature_names;
  std::string target_name = "y";
  /// Feature statistics; when `standardized` is true, x holds (raw - mean) / std.
  Vector x_mean;
  Vector x_std;
  bool standardized = false;
  double y_mean = 0.0;
  double y_std = 1.0;
  std::uint64_t seed = 0;

  Index rows() const { return x.rows(); }
  Index features() const { return x.cols(); }
};

/// Column means and (population) standard deviations.
void column_stats(const Matrix& x, Vector& mean, Vector& std);
Matrix standardize(const Matrix& x, const Vector& mean, const Vector& std);
Matrix unstandardize(const Matrix& x, const Vector& mean, const Vector& std);

struct GroundTruth {
  int fid = 1;
  std::vector<Subset> interactions;
  double noise_var = 1.0;
};

constexpr Index kSyntheticDim = 10;

/// Noise-free value of f1..f4 at a 10-dimensional point.
double synthetic_function(int fid, const Eigen::Ref<const Vector>& x);
GroundTruth synthetic_truth(int fid, double noise_var);

/// n points with x ~ U(0,1]^10 and y = f(x) + sqrt(noise_var) ε. `part` selects
/// independent random streams (0 for training data, 1 for test data).
Dataset generate_synthetic(int fid, Index n, double noise_var, std::uint64_t seed, int part = 0);

/// Reads a CSV with a header row. Features are every column except the target.
Dataset parse_csv(const std::string& text, const std::string& target_column, bool standardize_features);
Dataset ingest_csv(const std::string& path, const std::string& target_column, bool standardize_features);
/// Writes raw-scale features followed by the target.
std::string dataset_csv(const Dataset& d);

struct Split {
  Dataset train;
  Dataset test;
};

/// Random split with round(test_fraction * n) test rows.
Split random_split(const Dataset& d, double test_fraction, std::uint64_t seed);
/// Raw-scale features of a dataset.
Matrix raw_features(const Dataset& d);

double rmse(const Vector& mean, const Vector& y);
/// Mean over points of log N(y; mean, var + noise_var). Throws when a total variance is <= 0.
double mean_log_likelihood(const Vector& mean, const Vector& var, const Vector& y, double noise_var = 0.0);
/// Fraction of ground-truth interactions matched before the first false positive
/// among the ranked subsets of size >= 2. A subset matches truth S when it contains S.
double top_rank_recall(const std::vector<Subset>& truth, const std::vector<Subset>& ranked);

}  // namespace bnnblocks
