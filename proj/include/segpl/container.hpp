/* Copyright 2026 The SegPL Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SEGPL_CONTAINER_HPP_
#define SEGPL_CONTAINER_HPP_

// On-disk array container: one sample is a raw little-endian float32 buffer
// `<stem>.f32` plus a JSON sidecar `<stem>.json` of the form
//   {"shape": [C, H, W], "dtype": "f32", "kind": "image" | "label"}
// Labels are stored as integer-valued floats.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "segpl/error.hpp"
#include "segpl/tensor.hpp"

namespace segpl {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

namespace fs = std::filesystem;

enum class ArrayKind { kImage, kLabel };

inline const char* to_string(ArrayKind k) { return k == ArrayKind::kImage ? "image" : "label"; }

struct StoredArray {
  Tensor<float> data;  // 1 x C x H x W
  ArrayKind kind = ArrayKind::kImage;
};

/// Writes one sample (n must be 1) as `<stem>.f32` + `<stem>.json`.
inline void write_array(const fs::path& stem, const Tensor<float>& sample, ArrayKind kind) {
  if (sample.n() != 1) throw ShapeError("container holds one sample, got " + sample.shape().str());
  fs::path raw = stem, side = stem;
  raw += ".f32";
  side += ".json";
  {
    std::ofstream os(raw, std::ios::binary);
    os.write(reinterpret_cast<const char*>(sample.data()),
             static_cast<std::streamsize>(sample.size() * sizeof(float)));
    if (!os) throw DataError("failed to write " + raw.string());
  }
  nlohmann::json meta = {{"shape", {sample.c(), sample.h(), sample.w()}},
                         {"dtype", "f32"},
                         {"kind", to_string(kind)}};
  std::ofstream js(side);
  js << meta.dump() << "\n";
  if (!js) throw DataError("failed to write " + side.string());
}

inline StoredArray read_array(const fs::path& stem) {
  fs::path raw = stem, side = stem;
  raw += ".f32";
  side += ".json";
  if (!fs::exists(side)) throw FormatError("missing sidecar " + side.string());
  if (!fs::exists(raw)) throw FormatError("missing data file " + raw.string());
  nlohmann::json meta;
  try {
    std::ifstream js(side);
    meta = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed sidecar " + side.string() + ": " + e.what());
  }
  std::vector<int> shape;
  std::string dtype, kind;
  try {
    shape = meta.at("shape").get<std::vector<int>>();
    dtype = meta.at("dtype").get<std::string>();
    kind = meta.at("kind").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed sidecar " + side.string() + ": " + e.what());
  }
  if (dtype != "f32") throw FormatError(side.string() + ": unsupported dtype '" + dtype + "'");
  if (kind != "image" && kind != "label") {
    throw FormatError(side.string() + ": unknown kind '" + kind + "'");
  }
  if (shape.size() == 2) shape.insert(shape.begin(), 1);
  if (shape.size() != 3 || shape[0] < 1 || shape[1] < 1 || shape[2] < 1) {
    throw FormatError(side.string() + ": shape must be [C, H, W] or [H, W]");
  }
  StoredArray out;
  out.kind = kind == "image" ? ArrayKind::kImage : ArrayKind::kLabel;
  out.data = Tensor<float>(Shape4{1, shape[0], shape[1], shape[2]});
  const auto expected = out.data.size() * sizeof(float);
  if (fs::file_size(raw) != expected) {
    throw FormatError(raw.string() + " holds " + std::to_string(fs::file_size(raw)) +
                      " bytes, sidecar shape needs " + std::to_string(expected));
  }
  std::ifstream is(raw, std::ios::binary);
  is.read(reinterpret_cast<char*>(out.data.data()), static_cast<std::streamsize>(expected));
  if (!is) throw DataError("failed to read " + raw.string());
  return out;
}

}  // namespace segpl

#endif  // SEGPL_CONTAINER_HPP_
