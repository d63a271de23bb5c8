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

#include "bnnblocks/model_io.hpp"

using namespace bnnblocks;
namespace fs = std::filesystem;

namespace {

SavedModel trained(Variant v) {
  const Dataset d = generate_synthetic(1, 300, 1.0, 4);
  AddnnConfig cfg;
  cfg.variant = v;
  cfg.subnets = 2;
  cfg.features = 6;
  cfg.train.steps = 60;
  cfg.train.lasso_warmup = 20;
  SavedModel m;
  m.model = fit_addnn(cfg, d.x, d.y).model;
  m.feature_names = d.feature_names;
  return m;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void dump(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

}  // namespace

TEST_SUITE("model_io") {
  TEST_CASE("checksums") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(matrix_checksum(Matrix::Ones(2, 2)) != matrix_checksum(Matrix::Ones(1, 4)));
  }

  TEST_CASE("round trip preserves predictions for every variant") {
    for (Variant v : {Variant::McDropout, Variant::RF, Variant::DKL, Variant::DRF}) {
      CAPTURE(to_string(v));
      const SavedModel m = trained(v);
      const std::string blob = model_blob(m);
      const std::string text = model_text(m, "model.bin", blob);
      const SavedModel back = parse_model(text, blob);
      CHECK(model_text(back, "model.bin", model_blob(back)) == text);
      const Matrix x = generate_synthetic(1, 20, 1.0, 9).x;
      PredictOptions po;
      po.mc_samples = 7;
      po.keep_draws = false;
      const Prediction a = predict_addnn(m.model, x, po), b = predict_addnn(back.model, x, po);
      CHECK(a.mean == b.mean);
      CHECK(a.variance == b.variance);
      CHECK(back.feature_names == m.feature_names);
      CHECK(back.model.config.train.steps == 60);
    }
  }

  TEST_CASE("files on disk and corruption detection") {
    const fs::path dir = fs::temp_directory_path() / "bnnblocks_model_io_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string stem = (dir / "model").string();
    const SavedModel m = trained(Variant::RF);
    save_model(m, stem);
    CHECK_NOTHROW(load_model(stem));

    std::string blob = slurp(stem + ".bin");
    const std::string text = slurp(stem + ".txt");

    std::string flipped = blob;
    flipped[flipped.size() / 2] = static_cast<char>(flipped[flipped.size() / 2] ^ 0x40);
    dump(stem + ".bin", flipped);
    CHECK_THROWS_AS(load_model(stem), ModelFormatError);

    dump(stem + ".bin", blob.substr(0, blob.size() - 8));
    CHECK_THROWS_AS(load_model(stem), ModelFormatError);

    dump(stem + ".bin", blob);
    std::string reseeded = text;
    const auto pos = reseeded.find(" seed=");
    REQUIRE(pos != std::string::npos);
    std::string overflow = reseeded;
    overflow.insert(pos + 6, "99999999999999999999");
    dump(stem + ".txt", overflow);
    CHECK_THROWS_AS(load_model(stem), ModelFormatError);
    const auto last = reseeded.find_first_not_of("0123456789", pos + 6) - 1;
    reseeded[last] = reseeded[last] == '1' ? '2' : '1';
    dump(stem + ".txt", reseeded);
    CHECK_THROWS_WITH_AS(load_model(stem), doctest::Contains("do not match their seed"), ModelFormatError);

    dump(stem + ".txt", "format = 7\n");
    CHECK_THROWS_AS(load_model(stem), ModelFormatError);

    fs::remove(stem + ".bin");
    dump(stem + ".txt", text);
    CHECK_THROWS(load_model(stem));
    fs::remove_all(dir);
  }
}
