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

#ifndef SEGPL_INFERENCE_HPP_
#define SEGPL_INFERENCE_HPP_

#include <algorithm>
#include <string>
#include <vector>

#include "segpl/nn/unet.hpp"
#include "segpl/segcore.hpp"

namespace segpl {

/// How probabilities are binarised at evaluation time.
struct ThresholdMode {
  enum class Kind { kFixed, kPosteriorMean };
  Kind kind = Kind::kFixed;
  float value = 0.5f;

  static ThresholdMode fixed(float t) { return {Kind::kFixed, t}; }
  static ThresholdMode posterior_mean() { return {Kind::kPosteriorMean, 0.0f}; }

  std::string str() const {
    return kind == Kind::kFixed ? "fixed(" + std::to_string(value) + ")" : "posterior_mean";
  }
};

struct Prediction {
  ProbMap prob;
  ThresholdHeadOutput head;  // empty if the model has no head
};

/// Forward pass in chunks of `chunk` images.
inline Prediction predict(const UNet<float>& model, const Tensor<float>& images, int chunk = 8) {
  Tensor<float> probs(Shape4{images.n(), model.config().num_classes, images.h(), images.w()});
  Prediction out;
  out.head.images = images.n();
  out.head.classes = model.has_threshold_head() ? model.config().num_classes : 0;
  for (int first = 0; first < images.n(); first += chunk) {
    const int count = std::min(chunk, images.n() - first);
    auto o = model.forward(images.slice(first, count));
    for (std::size_t i = 0; i < o.logits.size(); ++i) {
      probs[first * probs.shape().sample() + i] = sigmoid(o.logits[i]);
    }
    out.head.mu.insert(out.head.mu.end(), o.head.mu.begin(), o.head.mu.end());
    out.head.log_sigma.insert(out.head.log_sigma.end(), o.head.log_sigma.begin(),
                              o.head.log_sigma.end());
  }
  out.prob = ProbMap(std::move(probs));
  return out;
}

/// Per-(image, class) thresholds implied by `mode`.
inline std::vector<float> thresholds_for(const Prediction& p, const ThresholdMode& mode) {
  const auto& s = p.prob.shape();
  if (mode.kind == ThresholdMode::Kind::kFixed) {
    return std::vector<float>(static_cast<std::size_t>(s.n) * s.c, mode.value);
  }
  if (p.head.mu.empty() && s.n > 0) {
    throw CapabilityError("posterior-mean thresholds need a model with a threshold head");
  }
  return p.head.mu;
}

inline MaskBatch predict_masks(const Prediction& p, const ThresholdMode& mode) {
  return binarize(p.prob, thresholds_for(p, mode));
}

}  // namespace segpl

#endif  // SEGPL_INFERENCE_HPP_
