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

// Saved models are a pair of files: a line-oriented text manifest (skeleton,
// recipes, seeds, families, priors, shapes, checksums) and a binary blob with
// every numeric array. Arrays are written as int64 rows, int64 cols and then
// row-major IEEE-754 doubles, all little-endian. Integrity checks use 64-bit
// FNV-1a over those bytes.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bnnblocks/addnn.hpp"

namespace bnnblocks {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
/// Checksum of a matrix in its serialized form.
std::uint64_t matrix_checksum(const Matrix& m);

class ModelFormatError : public Error {
 public:
  using Error::Error;
};

struct SavedModel {
  std::string preset = "addnn";  // "addnn" or "bnn"
  AddnnModel model;              // config is meaningful for the addnn preset only
  std::vector<std::string> feature_names;
  std::string target_name = "y";
};

/// Writes <stem>.txt and <stem>.bin.
void save_model(const SavedModel& m, const std::string& stem);
SavedModel load_model(const std::string& stem);

/// In-memory forms; the text names the blob by `blob_name`.
std::string model_text(const SavedModel& m, const std::string& blob_name, const std::string& blob);
std::string model_blob(const SavedModel& m);
SavedModel parse_model(std::string_view text, std::string_view blob);

}  // namespace bnnblocks
