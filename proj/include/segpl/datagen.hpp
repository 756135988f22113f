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

#ifndef SEGPL_DATAGEN_HPP_
#define SEGPL_DATAGEN_HPP_

// Synthetic segmentation data (ellipse blobs and thin Bezier tubes on a
// textured background) and ingestion of container-format datasets.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "segpl/container.hpp"
#include "segpl/error.hpp"
#include "segpl/segcore.hpp"

namespace segpl {

enum class Texture { kFlat, kGradient, kSpeckle };

inline std::string to_string(Texture t) {
  switch (t) {
    case Texture::kFlat: return "flat";
    case Texture::kGradient: return "gradient";
    case Texture::kSpeckle: return "speckle";
  }
  return "flat";
}

inline Texture texture_from_string(const std::string& s) {
  if (s == "flat") return Texture::kFlat;
  if (s == "gradient") return Texture::kGradient;
  if (s == "speckle") return Texture::kSpeckle;
  throw ConfigError("unknown texture '" + s + "' (expected flat, gradient or speckle)");
}

struct SynthConfig {
  int image_size = 64;
  int num_classes = 1;
  int n_labelled = 4;
  int n_unlabelled = 64;
  int n_val = 8;
  int n_test = 20;
  double noise_std = 0.5;
  Texture texture = Texture::kGradient;
  std::uint64_t seed = 0;
  /// Objects per class are drawn uniformly from [1, max_objects].
  int max_objects = 3;
  /// Multiplies blob radii and tube widths; small values give sparse foreground.
  double object_scale = 1.0;
  /// Probability that an object is a thin tube rather than an ellipse.
  double tube_probability = 0.4;

  void validate() const {
    if (image_size < 8) throw ConfigError("synth.image_size must be >= 8");
    if (num_classes < 1) throw ConfigError("synth.num_classes must be >= 1");
    if (n_labelled < 0 || n_unlabelled < 0 || n_val < 0 || n_test < 0) {
      throw ConfigError("synth split counts must be >= 0");
    }
    if (!(noise_std >= 0.0)) throw ConfigError("synth.noise_std must be >= 0");
    if (max_objects < 1) throw ConfigError("synth.max_objects must be >= 1");
    if (!(object_scale > 0.0)) throw ConfigError("synth.object_scale must be > 0");
    if (!(tube_probability >= 0.0 && tube_probability <= 1.0)) {
      throw ConfigError("synth.tube_probability must lie in [0, 1]");
    }
  }

  /// 4 labelled / 64 unlabelled / 8 validation / 20 test, 64x64, one class.
  static SynthConfig preset(const std::string& name) {
    if (name == "synthetic-fast") return SynthConfig{};
    throw ConfigError("unknown dataset preset '" + name + "'");
  }
};

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = {{"image_size", c.image_size}, {"num_classes", c.num_classes},
       {"n_labelled", c.n_labelled}, {"n_unlabelled", c.n_unlabelled},
       {"n_val", c.n_val},           {"n_test", c.n_test},
       {"noise_std", c.noise_std},   {"texture", to_string(c.texture)},
       {"seed", c.seed},             {"max_objects", c.max_objects},
       {"object_scale", c.object_scale}, {"tube_probability", c.tube_probability}};
}

inline void from_json(const nlohmann::json& j, SynthConfig& c) {
  SynthConfig d;
  c.image_size = j.value("image_size", d.image_size);
  c.num_classes = j.value("num_classes", d.num_classes);
  c.n_labelled = j.value("n_labelled", d.n_labelled);
  c.n_unlabelled = j.value("n_unlabelled", d.n_unlabelled);
  c.n_val = j.value("n_val", d.n_val);
  c.n_test = j.value("n_test", d.n_test);
  c.noise_std = j.value("noise_std", d.noise_std);
  c.texture = texture_from_string(j.value("texture", to_string(d.texture)));
  c.seed = j.value("seed", d.seed);
  c.max_objects = j.value("max_objects", d.max_objects);
  c.object_scale = j.value("object_scale", d.object_scale);
  c.tube_probability = j.value("tube_probability", d.tube_probability);
}

/// One generated case before and after noise/normalisation.
struct SynthSample {
  Tensor<float> clean;   // 1 x 1 x S x S, class k has intensity k plus texture in [-0.2, 0.2]
  Tensor<float> image;   // clean + noise, case-normalised
  Tensor<float> label;   // 1 x 1 x S x S, raw class ids 0..K
};

enum class Split { kLabelled = 0, kUnlabelled = 1, kVal = 2, kTest = 3 };

inline const char* split_name(Split s) {
  static constexpr std::array<const char*, 4> names = {"labelled", "unlabelled", "val", "test"};
  return names[static_cast<int>(s)];
}

/// Zero-mean, unit-variance over the whole case.
inline void normalise_case(std::span<float> x) {
  double mean = 0.0;
  for (float v : x) mean += v;
  mean /= double(x.size());
  double var = 0.0;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= double(x.size());
  const double inv = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
  for (float& v : x) v = static_cast<float>((v - mean) * inv);
}

namespace detail {

inline void paint_ellipse(Tensor<float>& label, int cls, std::mt19937_64& rng, double scale) {
  const int s = label.h();
  std::uniform_real_distribution<double> centre(0.15 * s, 0.85 * s);
  std::uniform_real_distribution<double> axis(0.06 * s * scale, 0.18 * s * scale);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  const double cx = centre(rng), cy = centre(rng);
  const double a = std::max(axis(rng), 0.75), b = std::max(axis(rng), 0.75);
  const double th = angle(rng), ct = std::cos(th), st = std::sin(th);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double u = (dx * ct + dy * st) / a, v = (-dx * st + dy * ct) / b;
      if (u * u + v * v <= 1.0) label(0, 0, y, x) = float(cls);
    }
  }
}

inline void paint_tube(Tensor<float>& label, int cls, std::mt19937_64& rng, double scale) {
  const int s = label.h();
  std::uniform_real_distribution<double> pos(0.1 * s, 0.9 * s);
  std::uniform_real_distribution<double> rad(0.8, 1.8);
  std::array<double, 8> p{};
  for (double& v : p) v = pos(rng);
  const double r = std::max(rad(rng) * scale * s / 64.0, 0.5);
  const int steps = 8 * s;
  for (int i = 0; i <= steps; ++i) {
    const double t = double(i) / steps, m = 1.0 - t;
    const double w0 = m * m * m, w1 = 3 * m * m * t, w2 = 3 * m * t * t, w3 = t * t * t;
    const double cx = w0 * p[0] + w1 * p[2] + w2 * p[4] + w3 * p[6];
    const double cy = w0 * p[1] + w1 * p[3] + w2 * p[5] + w3 * p[7];
    const int y0 = std::max(0, int(std::floor(cy - r))), y1 = std::min(s - 1, int(std::ceil(cy + r)));
    const int x0 = std::max(0, int(std::floor(cx - r))), x1 = std::min(s - 1, int(std::ceil(cx + r)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        if (dx * dx + dy * dy <= r * r) label(0, 0, y, x) = float(cls);
      }
    }
  }
}

}  // namespace detail

/// Deterministic in (config.seed, split, index) alone.
inline SynthSample generate_sample(const SynthConfig& cfg, Split split, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed),
                    static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(split), static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  const int s = cfg.image_size;
  SynthSample out;
  out.label = Tensor<float>(1, 1, s, s);
  std::uniform_int_distribution<int> count(1, cfg.max_objects);
  std::bernoulli_distribution tube(cfg.tube_probability);
  for (int k = 1; k <= cfg.num_classes; ++k) {
    const int n = count(rng);
    for (int o = 0; o < n; ++o) {
      if (tube(rng)) {
        detail::paint_tube(out.label, k, rng, cfg.object_scale);
      } else {
        detail::paint_ellipse(out.label, k, rng, cfg.object_scale);
      }
    }
  }

  out.clean = Tensor<float>(1, 1, s, s);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> speckle(-0.2, 0.2);
  const double th = angle(rng), ct = std::cos(th), st = std::sin(th);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      double t = 0.0;
      if (cfg.texture == Texture::kGradient) {
        const double u = ((x + 0.5 - s / 2.0) * ct + (y + 0.5 - s / 2.0) * st) / (s / std::sqrt(2.0));
        t = 0.2 * std::clamp(u, -1.0, 1.0);
      } else if (cfg.texture == Texture::kSpeckle) {
        t = speckle(rng);
      }
      out.clean(0, 0, y, x) = static_cast<float>(out.label(0, 0, y, x) + t);
    }
  }

  out.image = out.clean;
  std::normal_distribution<double> noise(0.0, 1.0);
  for (float& v : out.image.storage()) v = static_cast<float>(v + cfg.noise_std * noise(rng));
  normalise_case(out.image.storage());
  return out;
}

/// One split of a dataset held in memory. `masks` is empty for unlabelled data.
struct DataSplit {
  Tensor<float> images;
  Tensor<float> masks;
  std::vector<std::string> ids;

  int size() const { return images.n(); }
  bool labelled() const { return !masks.empty(); }
};

struct Dataset {
  DataSplit labelled, unlabelled, val, test;
  ClassMap class_map = ClassMap::binary();

  int num_classes() const { return class_map.num_channels(); }
  const DataSplit& split(Split s) const {
    switch (s) {
      case Split::kLabelled: return labelled;
      case Split::kUnlabelled: return unlabelled;
      case Split::kVal: return val;
      case Split::kTest: return test;
    }
    return test;
  }
  DataSplit& split(Split s) { return const_cast<DataSplit&>(std::as_const(*this).split(s)); }
};

inline constexpr const char* kDatasetManifest = "dataset.json";

/// Writes a synthetic dataset in container format under `dir`. Refuses to
/// overwrite an existing dataset unless `overwrite`. Returns the manifest path.
inline fs::path generate(const SynthConfig& cfg, const fs::path& dir, bool overwrite = false) {
  cfg.validate();
  const fs::path manifest_path = dir / kDatasetManifest;
  if (fs::exists(manifest_path) && !overwrite) {
    throw ConfigError("dataset already exists at " + dir.string() + " (use --force to replace)");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());

  const ClassMap map = ClassMap::disjoint(cfg.num_classes);
  nlohmann::json splits = nlohmann::json::object();
  const std::array<std::pair<Split, int>, 4> plan = {{{Split::kLabelled, cfg.n_labelled},
                                                      {Split::kUnlabelled, cfg.n_unlabelled},
                                                      {Split::kVal, cfg.n_val},
                                                      {Split::kTest, cfg.n_test}}};
  for (const auto& [split, n] : plan) {
    const std::string name = split_name(split);
    fs::remove_all(dir / name);
    fs::create_directories(dir / name);
    nlohmann::json entries = nlohmann::json::array();
    for (int i = 0; i < n; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%06d", i);
      const std::string stem = name + "/" + buf;
      const SynthSample s = generate_sample(cfg, split, i);
      write_array(dir / (stem + "_image"), s.image, ArrayKind::kImage);
      nlohmann::json e = {{"id", buf}, {"image", stem + "_image"}};
      if (split != Split::kUnlabelled) {
        write_array(dir / (stem + "_label"), s.label, ArrayKind::kLabel);
        e["label"] = stem + "_label";
      }
      entries.push_back(std::move(e));
    }
    splits[name] = std::move(entries);
  }
  nlohmann::json manifest = {{"format", "segpl-dataset"},
                             {"version", 1},
                             {"image_size", cfg.image_size},
                             {"in_channels", 1},
                             {"num_classes", cfg.num_classes},
                             {"class_map", map.to_json()},
                             {"synth_config", cfg},
                             {"splits", splits}};
  std::ofstream os(manifest_path);
  os << manifest.dump(2) << "\n";
  if (!os) throw DataError("failed to write " + manifest_path.string());
  return manifest_path;
}

namespace detail {

inline bool is_binary(const Tensor<float>& t) {
  return std::all_of(t.storage().begin(), t.storage().end(),
                     [](float v) { return v == 0.0f || v == 1.0f; });
}

inline Tensor<float> stack(const std::vector<Tensor<float>>& xs) {
  if (xs.empty()) return {};
  const Shape4 s = xs.front().shape();
  Tensor<float> out(Shape4{static_cast<int>(xs.size()), s.c, s.h, s.w});
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::copy(xs[i].storage().begin(), xs[i].storage().end(), out.sample(int(i)).begin());
  }
  return out;
}

struct IngestEntry {
  std::string id;
  std::string image;
  std::optional<std::string> label;
};

inline std::vector<IngestEntry> scan_split(const fs::path& dir) {
  std::vector<IngestEntry> out;
  if (!fs::is_directory(dir)) return out;
  std::vector<std::string> stems;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    const std::string suffix = "_image.f32";
    if (name.size() > suffix.size() && name.ends_with(suffix)) {
      stems.push_back(name.substr(0, name.size() - suffix.size()));
    }
  }
  std::sort(stems.begin(), stems.end());
  const std::string split = dir.filename().string();
  for (const auto& s : stems) {
    IngestEntry e{s, split + "/" + s + "_image", std::nullopt};
    if (fs::exists(dir / (s + "_label.f32")) || fs::exists(dir / (s + "_label.json"))) {
      e.label = split + "/" + s + "_label";
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace detail

/// Loads a container-format dataset. Labels go through `class_map` (or the
/// manifest's map when none is given); without any map they must already be
/// binary, one channel per class.
inline Dataset ingest(const fs::path& dir, std::optional<ClassMap> class_map = std::nullopt) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory " + dir.string() + " not found");
  std::map<std::string, std::vector<detail::IngestEntry>> entries;
  const fs::path manifest_path = dir / kDatasetManifest;
  if (fs::exists(manifest_path)) {
    nlohmann::json m;
    try {
      std::ifstream is(manifest_path);
      m = nlohmann::json::parse(is);
      for (const auto& [split, list] : m.at("splits").items()) {
        for (const auto& e : list) {
          detail::IngestEntry ie{e.value("id", ""), e.at("image").get<std::string>(), std::nullopt};
          if (e.contains("label")) ie.label = e.at("label").get<std::string>();
          entries[split].push_back(std::move(ie));
        }
      }
      if (!class_map && m.contains("class_map")) class_map = ClassMap::from_json(m.at("class_map"));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
  } else {
    for (Split s : {Split::kLabelled, Split::kUnlabelled, Split::kVal, Split::kTest}) {
      entries[split_name(s)] = detail::scan_split(dir / split_name(s));
    }
  }

  Dataset ds;
  std::optional<Shape4> ref;
  std::string ref_file;
  auto check_shape = [&](const Tensor<float>& t, const std::string& file) {
    if (!ref) {
      ref = t.shape();
      ref_file = file;
      return;
    }
    if (t.c() != ref->c || t.h() != ref->h || t.w() != ref->w) {
      throw ShapeError("inconsistent image shapes: " + file + " is " + t.shape().str() +
                       " but " + ref_file + " is " + ref->str());
    }
  };

  int label_channels = -1;
  for (Split s : {Split::kLabelled, Split::kUnlabelled, Split::kVal, Split::kTest}) {
    DataSplit& out = ds.split(s);
    std::vector<Tensor<float>> images, masks;
    for (const auto& e : entries[split_name(s)]) {
      StoredArray img = read_array(dir / e.image);
      check_shape(img.data, e.image);
      images.push_back(std::move(img.data));
      out.ids.push_back(e.id);
      if (s == Split::kUnlabelled) continue;
      if (!e.label) throw FormatError("split " + std::string(split_name(s)) + " entry " + e.id + " has no label");
      StoredArray lab = read_array(dir / *e.label);
      if (lab.data.h() != images.back().h() || lab.data.w() != images.back().w()) {
        throw ShapeError("label " + *e.label + " is " + lab.data.shape().str() +
                         " but its image is " + images.back().shape().str());
      }
      Tensor<float> mask;
      if (class_map) {
        if (lab.data.c() != 1) throw ShapeError("label " + *e.label + " must have one channel to apply a class map");
        LabelVolume raw(lab.data.shape());
        for (std::size_t i = 0; i < raw.size(); ++i) {
          const float v = lab.data[i];
          if (v != std::round(v)) {
            throw DataError("label " + *e.label + " holds non-integer value " + std::to_string(v));
          }
          raw[i] = static_cast<std::int32_t>(v);
        }
        mask = decompose_multiclass(raw, *class_map).tensor();
      } else {
        if (!detail::is_binary(lab.data)) {
          throw DataError("label " + *e.label + " is not binary and no class map was supplied");
        }
        mask = std::move(lab.data);
      }
      if (label_channels < 0) label_channels = mask.c();
      if (mask.c() != label_channels) {
        throw ShapeError("label " + *e.label + " has " + std::to_string(mask.c()) +
                         " channels, expected " + std::to_string(label_channels));
      }
      masks.push_back(std::move(mask));
    }
    out.images = detail::stack(images);
    out.masks = detail::stack(masks);
  }
  if (class_map) {
    ds.class_map = *class_map;
  } else if (label_channels > 1) {
    ds.class_map = ClassMap::disjoint(label_channels);
  }
  return ds;
}

/// In-memory equivalent of generate() followed by ingest().
inline Dataset synthesize(const SynthConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.class_map = ClassMap::disjoint(cfg.num_classes);
  const std::array<std::pair<Split, int>, 4> plan = {{{Split::kLabelled, cfg.n_labelled},
                                                      {Split::kUnlabelled, cfg.n_unlabelled},
                                                      {Split::kVal, cfg.n_val},
                                                      {Split::kTest, cfg.n_test}}};
  for (const auto& [split, n] : plan) {
    std::vector<Tensor<float>> images, masks;
    DataSplit& out = ds.split(split);
    for (int i = 0; i < n; ++i) {
      SynthSample s = generate_sample(cfg, split, i);
      images.push_back(std::move(s.image));
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%06d", i);
      out.ids.emplace_back(buf);
      if (split == Split::kUnlabelled) continue;
      LabelVolume raw(s.label.shape());
      for (std::size_t j = 0; j < raw.size(); ++j) raw[j] = static_cast<std::int32_t>(s.label[j]);
      masks.push_back(decompose_multiclass(raw, ds.class_map).tensor());
    }
    out.images = detail::stack(images);
    out.masks = detail::stack(masks);
  }
  return ds;
}

}  // namespace segpl

#endif  // SEGPL_DATAGEN_HPP_
