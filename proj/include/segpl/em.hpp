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

#ifndef SEGPL_EM_HPP_
#define SEGPL_EM_HPP_

// E-step of pseudo-labelling: hard pseudo-labels from the current model,
// either at a fixed threshold or at a threshold drawn from the learned
// Gaussian posterior (reparameterised, clamped to [0.01, 0.99]).

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "segpl/error.hpp"
#include "segpl/nn/unet.hpp"
#include "segpl/segcore.hpp"

namespace segpl {

inline constexpr float kMinThreshold = 0.01f;
inline constexpr float kMaxThreshold = 0.99f;

/// Gaussian prior N(mu_beta, sigma_beta) over the pseudo-label threshold.
struct PriorConfig {
  double mu_beta = 0.5;
  double sigma_beta = 0.1;

  void validate() const {
    if (!(mu_beta > 0.0 && mu_beta < 1.0)) {
      throw ConfigError("prior.mu_beta must lie in (0, 1), got " + std::to_string(mu_beta));
    }
    if (!(sigma_beta > 0.0) || !std::isfinite(sigma_beta)) {
      throw ConfigError("prior.sigma_beta must be > 0, got " + std::to_string(sigma_beta));
    }
  }

  /// "brats" -> N(0.5, 0.1), "carve" -> N(0.4, 0.1).
  static PriorConfig preset(const std::string& name) {
    if (name == "brats") return {0.5, 0.1};
    if (name == "carve") return {0.4, 0.1};
    throw ConfigError("unknown prior preset '" + name + "'");
  }

  friend bool operator==(const PriorConfig&, const PriorConfig&) = default;
};

inline void to_json(nlohmann::json& j, const PriorConfig& p) {
  j = {{"mu_beta", p.mu_beta}, {"sigma_beta", p.sigma_beta}};
}
inline void from_json(const nlohmann::json& j, PriorConfig& p) {
  p.mu_beta = j.at("mu_beta").get<double>();
  p.sigma_beta = j.at("sigma_beta").get<double>();
}

/// Hard pseudo-labels. Masks are plain data: nothing downstream can route a
/// gradient through them back to the model that produced them.
struct PseudoLabelBatch {
  MaskBatch masks;
  /// One threshold per (image, class), row-major.
  std::vector<float> threshold_used;
  static constexpr bool gradient_barrier = true;
};

/// Backward of the thresholding node: identically zero (stop-gradient).
inline Tensor<float> pseudo_label_backward(const PseudoLabelBatch& labels,
                                           const Tensor<float>& /*dmasks*/) {
  return Tensor<float>(labels.masks.shape());
}

inline PseudoLabelBatch pseudo_label_fixed(const ProbMap& prob, float threshold) {
  if (!(threshold > 0.0f && threshold < 1.0f)) {
    throw ConfigError("pseudo-label threshold must lie in (0, 1), got " +
                      std::to_string(threshold));
  }
  PseudoLabelBatch out;
  out.threshold_used.assign(static_cast<std::size_t>(prob.shape().n) * prob.shape().c,
                            threshold);
  out.masks = binarize(prob, out.threshold_used);
  return out;
}

/// Reparameterised threshold draws t = clamp(mu + sigma * eps).
struct ThresholdSample {
  int images = 0;
  int classes = 0;
  std::vector<float> eps;
  std::vector<float> sigma;
  std::vector<float> value;  // clamped

  /// Chain rule through the unclamped path: dt/dmu = 1, dt/dlog_sigma = sigma * eps.
  void backward(const std::vector<float>& dthreshold, std::vector<float>& dmu,
                std::vector<float>& dlog_sigma) const {
    dmu.assign(value.size(), 0.0f);
    dlog_sigma.assign(value.size(), 0.0f);
    for (std::size_t i = 0; i < value.size(); ++i) {
      dmu[i] = dthreshold[i];
      dlog_sigma[i] = dthreshold[i] * sigma[i] * eps[i];
    }
  }
};

/// One draw per (image, class). log_sigma = -inf is accepted and means sigma = 0.
inline ThresholdSample sample_threshold(const ThresholdHeadOutput& post,
                                        std::mt19937_64& rng) {
  const std::size_t count = static_cast<std::size_t>(post.images) * post.classes;
  if (post.mu.size() != count || post.log_sigma.size() != count) {
    throw ShapeError("threshold posterior size mismatch");
  }
  ThresholdSample s;
  s.images = post.images;
  s.classes = post.classes;
  s.eps.resize(count);
  s.sigma.resize(count);
  s.value.resize(count);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (std::size_t i = 0; i < count; ++i) {
    const float mu = post.mu[i], ls = post.log_sigma[i];
    if (!std::isfinite(mu) || std::isnan(ls) || ls == INFINITY) {
      throw NumericError("non-finite threshold posterior (mu=" + std::to_string(mu) +
                         ", log_sigma=" + std::to_string(ls) + ")");
    }
    s.eps[i] = normal(rng);
    s.sigma[i] = std::exp(ls);
    s.value[i] = std::clamp(mu + s.sigma[i] * s.eps[i], kMinThreshold, kMaxThreshold);
  }
  return s;
}

/// Pseudo-labels at thresholds sampled from the posterior. `sample_out`, if
/// given, receives the draw so the caller can backpropagate through it.
inline PseudoLabelBatch pseudo_label_vi(const ProbMap& prob, const ThresholdHeadOutput& post,
                                        std::mt19937_64& rng,
                                        ThresholdSample* sample_out = nullptr) {
  if (post.images != prob.shape().n || post.classes != prob.shape().c) {
    throw ShapeError("posterior is " + std::to_string(post.images) + "x" +
                     std::to_string(post.classes) + " but probabilities are " +
                     prob.shape().str());
  }
  ThresholdSample s = sample_threshold(post, rng);
  PseudoLabelBatch out;
  out.masks = binarize(prob, s.value);
  out.threshold_used = s.value;
  if (sample_out) *sample_out = std::move(s);
  return out;
}

}  // namespace segpl

#endif  // SEGPL_EM_HPP_
