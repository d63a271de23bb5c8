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
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

namespace fs = std::filesystem;
using bnnblocks::cli::run;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& s) const { return (path / s).string(); }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("bench synth is byte-identical across runs") {
    TempDir t("bnnblocks_cli_synth");
    REQUIRE(run({"-o", t / "a", "bench", "synth", "--fid", "1", "--seed", "7", "--n-train", "100", "--n-test", "50"}) == 0);
    REQUIRE(run({"-o", t / "b", "bench", "synth", "--fid", "1", "--seed", "7", "--n-train", "100", "--n-test", "50"}) == 0);
    CHECK(slurp(t / "a/train.csv") == slurp(t / "b/train.csv"));
    CHECK(slurp(t / "a/test.csv") == slurp(t / "b/test.csv"));
    CHECK(slurp(t / "a/train.csv") != slurp(t / "a/test.csv"));
    CHECK(fs::exists(t / "a/manifest.toml"));
  }

  TEST_CASE("train, predict and interactions; manifests reproduce runs") {
    TempDir t("bnnblocks_cli_train");
    REQUIRE(run({"-o", t / "m", "train", "--fid", "1", "--n-train", "600", "--n-test", "200", "--steps", "300",
                 "--lasso-warmup", "60", "--subnets", "4"}) == 0);
    for (const char* f : {"model.txt", "model.bin", "trace.csv", "metrics.csv", "clusters.csv", "manifest.toml"}) {
      CHECK(fs::exists(t / (std::string("m/") + f)));
    }
    REQUIRE(run({"-o", t / "again", "--config", t / "m/manifest.toml"}) == 0);
    CHECK(slurp(t / "again/metrics.csv") == slurp(t / "m/metrics.csv"));
    CHECK(slurp(t / "again/model.bin") == slurp(t / "m/model.bin"));

    REQUIRE(run({"-o", t / "p", "predict", "--model", t / "m/model", "--fid", "1", "--n-train", "30"}) == 0);
    CHECK(slurp(t / "p/predictions.csv").rfind("row,mean,variance,variance_with_noise\n", 0) == 0);

    REQUIRE(run({"-o", t / "i", "interactions", "--model", t / "m/model", "--fid", "1", "--n-train", "600",
                 "--mc-draws", "2", "--heatmap-pairs", "1", "--grid", "4"}) == 0);
    CHECK(slurp(t / "i/interactions.csv").rfind("subset,strength,std\n", 0) == 0);
    bool heatmap = false;
    for (const auto& e : fs::directory_iterator(t.path / "i")) heatmap = heatmap || e.path().filename().string().rfind("heatmap_", 0) == 0;
    CHECK(heatmap);
  }

  TEST_CASE("kernel-check and equiv-check write their tables") {
    TempDir t("bnnblocks_cli_kernel");
    REQUIRE(run({"-o", t / "k", "kernel-check", "--sigma", "relu", "--r", "64,256", "--pairs", "10", "--seeds", "1,2"}) == 0);
    CHECK(slurp(t / "k/kernel_check.csv").find("64") != std::string::npos);
    CHECK(slurp(t / "k/metrics.csv").find("log_log_slope") != std::string::npos);
    REQUIRE(run({"-o", t / "e", "equiv-check", "--instances", "2"}) == 0);
    CHECK(fs::exists(t / "e/equiv_check.csv"));
  }

  TEST_CASE("skeleton subcommand round trips files") {
    TempDir t("bnnblocks_cli_skeleton");
    REQUIRE(run({"-o", t / "a", "skeleton", "--preset", "additive", "--inputs", "5", "--subnets", "3"}) == 0);
    REQUIRE(run({"-o", t / "b", "skeleton", "--file", t / "a/skeleton.txt"}) == 0);
    CHECK(slurp(t / "a/skeleton.txt") == slurp(t / "b/skeleton.txt"));
  }

  TEST_CASE("bench csv runs repeated splits") {
    TempDir t("bnnblocks_cli_bcsv");
    REQUIRE(run({"-o", t / "d", "bench", "synth", "--fid", "2", "--n-train", "200", "--n-test", "10"}) == 0);
    REQUIRE(run({"-o", t / "r", "bench", "csv", "--data", t / "d/train.csv", "--splits", "2", "--steps", "50",
                 "--lasso-warmup", "10", "--subnets", "2", "--predict-samples", "5"}) == 0);
    const std::string m = slurp(t / "r/metrics.csv");
    CHECK(m.rfind("split,rmse,mll\n", 0) == 0);
    CHECK(m.find("\nmean,") != std::string::npos);
  }

  TEST_CASE("errors exit nonzero and inputs are never overwritten") {
    TempDir t("bnnblocks_cli_errors");
    CHECK(run({}) != 0);
    CHECK(run({"train", "--no-such-flag"}) != 0);
    CHECK(run({"-o", t / "x", "predict", "--model", t / "missing", "--fid", "1"}) != 0);
    CHECK(run({"-o", t / "x", "train", "--fid", "1", "--data", t / "x.csv"}) != 0);
    CHECK(run({"-o", t / "x", "train", "--preset", "bnn", "--fid", "1", "--steps", "5"}) != 0);
    REQUIRE(run({"-o", t / "s", "skeleton", "--preset", "chain"}) == 0);
    const std::string before = slurp(t / "s/skeleton.txt");
    CHECK(run({"-o", t / "s", "skeleton", "--file", t / "s/skeleton.txt"}) != 0);
    CHECK(slurp(t / "s/skeleton.txt") == before);
  }

  TEST_CASE("bnn preset trains on a skeleton file") {
    TempDir t("bnnblocks_cli_bnn");
    {
      std::ofstream f(t / "net.txt");
      f << "layers = [10, 3, 1]\n";
    }
    REQUIRE(run({"-o", t / "m", "train", "--preset", "bnn", "--skeleton", t / "net.txt", "--recipe", "rb:8:relu+fb",
                 "--fid", "3", "--n-train", "200", "--n-test", "50", "--steps", "100"}) == 0);
    REQUIRE(run({"-o", t / "p", "predict", "--model", t / "m/model", "--fid", "3", "--n-train", "20"}) == 0);
  }
}
