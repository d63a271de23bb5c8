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
#include "bnnblocks/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "bnnblocks/rng.hpp"

namespace bnnblocks {
namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\"");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string subset_label(const Subset& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? ";" : "") + std::to_string(s[i] + 1);
  return out;
}

void column_stats(const Matrix& x, Vector& mean, Vector& std) {
  mean = x.colwise().mean().transpose();
  std = ((x.rowwise() - mean.transpose()).cwiseAbs2().colwise().sum() / static_cast<double>(x.rows()))
            .cwiseSqrt()
            .transpose();
}

Matrix standardize(const Matrix& x, const Vector& mean, const Vector& std) {
  return (x.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
}

Matrix unstandardize(const Matrix& x, const Vector& mean, const Vector& std) {
  return (x.array().rowwise() * std.transpose().array()).matrix().rowwise() + mean.transpose();
}

double synthetic_function(int fid, const Eigen::Ref<const Vector>& v) {
  require_shape(v.size() == kSyntheticDim, "synthetic_function", v.size(), 1, kSyntheticDim, 1);
  // 1-based names to mirror the usual statement of these functions.
  auto x = [&](int i) { return v(i - 1); };
  using std::numbers::pi;
  switch (fid) {
    case 1: return 10.0 * std::sin(pi * x(1) * x(2)) + 20.0 * std::pow(x(3) - 0.5, 2) + 10.0 * x(4) + 5.0 * x(5);
    case 2:
      return 10.0 * std::exp(x(1) * x(2)) - 20.0 * std::cos(x(3) + x(4) + x(5)) + 7.0 * std::asin(x(9) * x(10));
    case 3:
      return std::exp(std::abs(x(1) * x(2)) + 1.0) + std::exp(std::abs(x(3) + x(4)) + 1.0) -
             19.0 * std::cos(x(5) + x(6)) - 10.0 * std::sqrt(x(8) * x(8) + x(9) * x(9) + x(10) * x(10));
    case 4:
      return 1.0 / (1.0 + x(1) * x(1) + x(2) * x(2) + x(3) * x(3)) - 5.0 * std::sqrt(std::exp(x(4) + x(5))) +
             10.0 * std::abs(x(6) + x(7)) + 6.0 * x(8) * x(9) * x(10);
    default: break;
  }
  throw Error("synthetic function id must be 1..4, got " + std::to_string(fid));
}

GroundTruth synthetic_truth(int fid, double noise_var) {
  GroundTruth t;
  t.fid = fid;
  t.noise_var = noise_var;
  switch (fid) {
    case 1: t.interactions = {{0, 1}}; break;
    case 2: t.interactions = {{0, 1}, {2, 3, 4}, {8, 9}}; break;
    case 3: t.interactions = {{0, 1}, {2, 3}, {4, 5}, {7, 8, 9}}; break;
    case 4: t.interactions = {{0, 1, 2}, {3, 4}, {5, 6}, {7, 8, 9}}; break;
    default: throw Error("synthetic function id must be 1..4, got " + std::to_string(fid));
  }
  return t;
}

Dataset generate_synthetic(int fid, Index n, double noise_var, std::uint64_t seed, int part) {
  if (fid < 1 || fid > 4) throw Error("synthetic function id must be 1..4, got " + std::to_string(fid));
  if (n < 1) throw Error("generate_synthetic: n must be >= 1");
  if (noise_var < 0.0) throw Error("generate_synthetic: noise variance must be >= 0");
  const auto stream = static_cast<std::uint64_t>(2 * part);
  CounterRng xr(seed, stream);
  CounterRng er(seed, stream + 1);
  Dataset d;
  d.x = xr.uniform_matrix(n, kSyntheticDim);
  d.y.resize(n);
  const double sd = std::sqrt(noise_var);
  for (Index i = 0; i < n; ++i) {
    const double eps = er.normal();
    d.y(i) = synthetic_function(fid, d.x.row(i).transpose()) + (noise_var > 0.0 ? sd * eps : 0.0);
  }
  for (Index j = 0; j < kSyntheticDim; ++j) d.feature_names.push_back("x" + std::to_string(j + 1));
  d.seed = seed;
  d.y_mean = d.y.mean();
  d.y_std = std::sqrt((d.y.array() - d.y_mean).square().mean());
  return d;
}

Dataset parse_csv(const std::string& text, const std::string& target_column, bool standardize_features) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error("csv: missing header row");
  const auto header = split_line(line);
  const auto it = std::find(header.begin(), header.end(), target_column);
  if (it == header.end()) throw Error("csv: missing column '" + target_column + "'");
  const auto target = static_cast<std::size_t>(it - header.begin());

  std::vector<std::vector<double>> rows;
  Index row_no = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row_no;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw Error("csv: row " + std::to_string(row_no) + " has " + std::to_string(cells.size()) + " cells, expected " +
                  std::to_string(header.size()));
    }
    std::vector<double> vals;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      std::size_t used = 0;
      bool ok = !cells[c].empty();
      if (ok) {
        try {
          v = std::stod(cells[c], &used);
        } catch (const std::exception&) {
          ok = false;
        }
      }
      if (!ok || used != cells[c].size() || !std::isfinite(v)) {
        throw Error("csv: non-numeric cell '" + cells[c] + "' at (row " + std::to_string(row_no) + ", col " +
                    std::to_string(c + 1) + ")");
      }
      vals.push_back(v);
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw Error("csv: no data rows");

  Dataset d;
  const auto p = static_cast<Index>(header.size() - 1);
  d.x.resize(static_cast<Index>(rows.size()), p);
  d.y.resize(static_cast<Index>(rows.size()));
  for (std::size_t c = 0, j = 0; c < header.size(); ++c) {
    if (c == target) continue;
    d.feature_names.push_back(header[c]);
    for (std::size_t r = 0; r < rows.size(); ++r) d.x(static_cast<Index>(r), static_cast<Index>(j)) = rows[r][c];
    ++j;
  }
  for (std::size_t r = 0; r < rows.size(); ++r) d.y(static_cast<Index>(r)) = rows[r][target];
  d.target_name = target_column;
  column_stats(d.x, d.x_mean, d.x_std);
  if (standardize_features) {
    for (Index j = 0; j < p; ++j) {
      if (d.x_std(j) == 0.0) {
        throw Error("csv: column '" + d.feature_names[static_cast<std::size_t>(j)] + "' is constant; cannot standardize");
      }
    }
    d.x = standardize(d.x, d.x_mean, d.x_std);
    d.standardized = true;
  }
  d.y_mean = d.y.mean();
  d.y_std = std::sqrt((d.y.array() - d.y_mean).square().mean());
  return d;
}

Dataset ingest_csv(const std::string& path, const std::string& target_column, bool standardize_features) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("csv: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), target_column, standardize_features);
}

Matrix raw_features(const Dataset& d) { return d.standardized ? unstandardize(d.x, d.x_mean, d.x_std) : d.x; }

std::string dataset_csv(const Dataset& d) {
  std::ostringstream out;
  for (const auto& name : d.feature_names) out << name << ",";
  out << d.target_name << "\n";
  const Matrix x = raw_features(d);
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) out << fmt(x(i, j)) << ",";
    out << fmt(d.y(i)) << "\n";
  }
  return out.str();
}

Split random_split(const Dataset& d, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw Error("random_split: test fraction must lie in (0, 1)");
  const Index n = d.rows();
  const auto n_test = static_cast<Index>(std::llround(test_fraction * static_cast<double>(n)));
  if (n_test < 1 || n_test >= n) throw Error("random_split: split leaves an empty part");
  CounterRng rng(seed);
  const auto perm = rng.permutation(n);
  auto take = [&](Index start, Index count) {
    Dataset part = d;
    part.x.resize(count, d.features());
    part.y.resize(count);
    for (Index i = 0; i < count; ++i) {
      part.x.row(i) = d.x.row(perm[static_cast<std::size_t>(start + i)]);
      part.y(i) = d.y(perm[static_cast<std::size_t>(start + i)]);
    }
    part.seed = seed;
    return part;
  };
  return Split{take(n_test, n - n_test), take(0, n_test)};
}

double rmse(const Vector& mean, const Vector& y) {
  require_shape(mean.size() == y.size(), "rmse", mean.size(), 1, y.size(), 1);
  return std::sqrt((mean - y).squaredNorm() / static_cast<double>(y.size()));
}

double mean_log_likelihood(const Vector& mean, const Vector& var, const Vector& y, double noise_var) {
  require_shape(mean.size() == y.size() && var.size() == y.size(), "mean_log_likelihood", mean.size(), 1, y.size(), 1);
  double total = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    const double v = var(i) + noise_var;
    if (!(v > 0.0)) throw Error("mean_log_likelihood: non-positive variance at point " + std::to_string(i));
    const double r = y(i) - mean(i);
    total += -0.5 * (std::log(2.0 * std::numbers::pi * v) + r * r / v);
  }
  return total / static_cast<double>(y.size());
}

double top_rank_recall(const std::vector<Subset>& truth, const std::vector<Subset>& ranked) {
  if (truth.empty()) return 1.0;
  std::vector<Subset> sorted_truth;
  for (auto s : truth) {
    std::sort(s.begin(), s.end());
    sorted_truth.push_back(std::move(s));
  }
  std::vector<bool> matched(truth.size(), false);
  for (auto t : ranked) {
    if (t.size() < 2) continue;
    std::sort(t.begin(), t.end());
    bool hit = false;
    for (std::size_t k = 0; k < sorted_truth.size(); ++k) {
      if (matched[k]) continue;
      if (std::includes(t.begin(), t.end(), sorted_truth[k].begin(), sorted_truth[k].end())) {
        matched[k] = true;
        hit = true;
      }
    }
    if (!hit) break;
  }
  return static_cast<double>(std::count(matched.begin(), matched.end(), true)) / static_cast<double>(truth.size());
}

}  // namespace bnnblocks
