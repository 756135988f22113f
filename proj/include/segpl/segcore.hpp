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

#ifndef SEGPL_SEGCORE_HPP_
#define SEGPL_SEGCORE_HPP_

// Data containers, label decomposition and deterministic metrics.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "segpl/error.hpp"
#include "segpl/tensor.hpp"

namespace segpl {

/// Case-normalised input images, B x C_in x H x W.
class ImageBatch {
 public:
  ImageBatch() = default;
  explicit ImageBatch(Tensor<float> data) : data_(std::move(data)) {
    if (data_.n() < 1) throw ShapeError("image batch needs at least one image");
    if (data_.h() < 8 || data_.w() < 8) {
      throw ShapeError("images must be at least 8x8, got " + data_.shape().str());
    }
    if (!data_.all_finite()) throw DataError("image batch contains non-finite values");
  }
  const Tensor<float>& tensor() const { return data_; }
  const Shape4& shape() const { return data_.shape(); }

 private:
  Tensor<float> data_;
};

/// Binary masks, one channel per foreground class, B x K x H x W.
class MaskBatch {
 public:
  MaskBatch() = default;
  explicit MaskBatch(Tensor<float> data) : data_(std::move(data)) {
    for (float v : data_.storage()) {
      if (v != 0.0f && v != 1.0f) {
        throw DataError("mask entry " + std::to_string(v) + " is not 0 or 1");
      }
    }
  }
  const Tensor<float>& tensor() const { return data_; }
  const Shape4& shape() const { return data_.shape(); }

 private:
  Tensor<float> data_;
};

/// Per-pixel foreground probabilities, B x K x H x W, entries in [0, 1].
class ProbMap {
 public:
  ProbMap() = default;
  explicit ProbMap(Tensor<float> data) : data_(std::move(data)) {
    for (float v : data_.storage()) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw DataError("probability " + std::to_string(v) + " outside [0, 1]");
      }
    }
  }
  /// Elementwise sigmoid of logits.
  static ProbMap from_logits(const Tensor<float>& logits) {
    Tensor<float> p(logits.shape());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = sigmoid(logits[i]);
    ProbMap out;
    out.data_ = std::move(p);
    return out;
  }
  const Tensor<float>& tensor() const { return data_; }
  const Shape4& shape() const { return data_.shape(); }

 private:
  Tensor<float> data_;
};

/// Raw integer label maps, B x 1 x H x W.
using LabelVolume = Tensor<std::int32_t>;

/// Maps raw integer labels onto K binary channels. Channels may be nested
/// (a raw value switching on several channels) or disjoint.
class ClassMap {
 public:
  ClassMap() = default;
  ClassMap(std::vector<std::string> channel_names,
           std::map<std::int32_t, std::set<int>> rules)
      : names_(std::move(channel_names)), rules_(std::move(rules)) {
    if (names_.empty()) throw ConfigError("class map needs at least one channel");
    for (const auto& [value, channels] : rules_) {
      for (int ch : channels) {
        if (ch < 0 || ch >= num_channels()) {
          throw ConfigError("class map rule for value " + std::to_string(value) +
                            " names channel " + std::to_string(ch) +
                            " but only " + std::to_string(num_channels()) +
                            " channels exist");
        }
      }
    }
  }

  /// Single foreground class: 0 background, 1 foreground.
  static ClassMap binary() { return ClassMap({"foreground"}, {{0, {}}, {1, {0}}}); }

  /// Value k switches on channel k - 1 only; 0 is background.
  static ClassMap disjoint(int k) {
    std::vector<std::string> names;
    std::map<std::int32_t, std::set<int>> rules{{0, {}}};
    for (int i = 0; i < k; ++i) {
      names.push_back("class" + std::to_string(i + 1));
      rules[i + 1] = {i};
    }
    return ClassMap(std::move(names), std::move(rules));
  }

  /// Brain-tumour style nesting: 1 whole tumour, 2 tumour core, 3 enhancing
  /// core, where each inner region also belongs to every outer one.
  static ClassMap brats_nested() {
    return ClassMap({"whole", "core", "enhancing"},
                    {{0, {}}, {1, {0}}, {2, {0, 1}}, {3, {0, 1, 2}}});
  }

  static ClassMap preset(const std::string& name) {
    if (name == "binary") return binary();
    if (name == "brats") return brats_nested();
    throw ConfigError("unknown class map preset '" + name + "'");
  }

  int num_channels() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& channel_names() const { return names_; }
  const std::map<std::int32_t, std::set<int>>& rules() const { return rules_; }
  std::vector<std::int32_t> class_ids() const {
    std::vector<std::int32_t> ids;
    for (const auto& [v, _] : rules_) ids.push_back(v);
    return ids;
  }

  const std::set<int>& channels_for(std::int32_t value) const {
    auto it = rules_.find(value);
    if (it == rules_.end()) {
      throw ConfigError("label value " + std::to_string(value) +
                        " is not covered by the class map");
    }
    return it->second;
  }

  nlohmann::json to_json() const {
    nlohmann::json rules = nlohmann::json::object();
    for (const auto& [v, chs] : rules_) {
      rules[std::to_string(v)] = std::vector<int>(chs.begin(), chs.end());
    }
    return {{"channels", names_}, {"rules", rules}};
  }

  static ClassMap from_json(const nlohmann::json& j) {
    try {
      std::map<std::int32_t, std::set<int>> rules;
      for (const auto& [key, chs] : j.at("rules").items()) {
        auto channels = chs.get<std::vector<int>>();
        rules[std::stoi(key)] = std::set<int>(channels.begin(), channels.end());
      }
      return ClassMap(j.at("channels").get<std::vector<std::string>>(), std::move(rules));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed class map: ") + e.what());
    } catch (const std::invalid_argument&) {
      throw ConfigError("class map rule keys must be integers");
    }
  }

 private:
  std::vector<std::string> names_;
  std::map<std::int32_t, std::set<int>> rules_;
};

/// Expands raw integer labels into K binary channels according to `map`.
inline MaskBatch decompose_multiclass(const LabelVolume& raw, const ClassMap& map) {
  if (raw.c() != 1) {
    throw ShapeError("raw labels must have a single channel, got " + raw.shape().str());
  }
  const int k = map.num_channels();
  Tensor<float> out(Shape4{raw.n(), k, raw.h(), raw.w()});
  const std::size_t plane = raw.shape().plane();
  for (int b = 0; b < raw.n(); ++b) {
    auto src = raw.plane(b, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      for (int ch : map.channels_for(src[i])) {
        out.plane(b, ch)[i] = 1.0f;
      }
    }
  }
  return MaskBatch(std::move(out));
}

namespace detail {
inline void require_same_shape(const Shape4& a, const Shape4& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": " + a.str() + " vs " + b.str());
  }
}
}  // namespace detail

/// IoU of one case: mean over channels with a non-empty union. Returns
/// nullopt when every channel is empty in both masks.
inline std::optional<double> iou_case(const MaskBatch& pred, const MaskBatch& truth,
                                      int b) {
  detail::require_same_shape(pred.shape(), truth.shape(), "iou shape mismatch");
  double sum = 0.0;
  int counted = 0;
  for (int ch = 0; ch < pred.shape().c; ++ch) {
    auto p = pred.tensor().plane(b, ch);
    auto t = truth.tensor().plane(b, ch);
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const bool pi = p[i] != 0.0f, ti = t[i] != 0.0f;
      inter += (pi && ti);
      uni += (pi || ti);
    }
    if (uni == 0) continue;
    sum += static_cast<double>(inter) / static_cast<double>(uni);
    ++counted;
  }
  if (counted == 0) return std::nullopt;
  return sum / counted;
}

/// Per-case IoU for every case in the batch.
inline std::vector<std::optional<double>> iou_per_case(const MaskBatch& pred,
                                                       const MaskBatch& truth) {
  detail::require_same_shape(pred.shape(), truth.shape(), "iou shape mismatch");
  std::vector<std::optional<double>> out;
  out.reserve(pred.shape().n);
  for (int b = 0; b < pred.shape().n; ++b) out.push_back(iou_case(pred, truth, b));
  return out;
}

/// Intersection over union: channel mean per case (empty-union channels
/// skipped), then mean over cases. If nothing is scorable the masks agree
/// everywhere and the result is 1.
inline double iou(const MaskBatch& pred, const MaskBatch& truth) {
  double sum = 0.0;
  int counted = 0;
  for (const auto& v : iou_per_case(pred, truth)) {
    if (!v) continue;
    sum += *v;
    ++counted;
  }
  return counted == 0 ? 1.0 : sum / counted;
}

/// Mean squared difference between probabilities and binary truth.
inline double brier(const ProbMap& prob, const MaskBatch& truth) {
  detail::require_same_shape(prob.shape(), truth.shape(), "brier shape mismatch");
  const auto& p = prob.tensor().storage();
  const auto& y = truth.tensor().storage();
  if (p.empty()) throw ShapeError("brier of an empty batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(y[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(p.size());
}

/// Binarises probabilities: 1 where p > threshold. `thresholds` holds one
/// value per (image, channel), row-major.
inline MaskBatch binarize(const ProbMap& prob, std::span<const float> thresholds) {
  const auto& s = prob.shape();
  if (thresholds.size() != static_cast<std::size_t>(s.n) * s.c) {
    throw ShapeError("expected " + std::to_string(s.n * s.c) + " thresholds, got " +
                     std::to_string(thresholds.size()));
  }
  Tensor<float> out(s);
  for (int b = 0; b < s.n; ++b) {
    for (int ch = 0; ch < s.c; ++ch) {
      const float t = thresholds[b * s.c + ch];
      auto p = prob.tensor().plane(b, ch);
      auto m = out.plane(b, ch);
      for (std::size_t i = 0; i < p.size(); ++i) m[i] = p[i] > t ? 1.0f : 0.0f;
    }
  }
  return MaskBatch(std::move(out));
}

inline MaskBatch binarize(const ProbMap& prob, float threshold) {
  std::vector<float> t(static_cast<std::size_t>(prob.shape().n) * prob.shape().c,
                       threshold);
  return binarize(prob, t);
}

}  // namespace segpl

#endif  // SEGPL_SEGCORE_HPP_
