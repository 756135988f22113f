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

#ifndef SEGPL_EVALSUITE_HPP_
#define SEGPL_EVALSUITE_HPP_

// Test-set IoU, OOD gamma-blend sweep, single-step FGSM sweep and
// Monte-Carlo threshold uncertainty with Brier scoring.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "segpl/csv.hpp"
#include "segpl/datagen.hpp"
#include "segpl/em.hpp"
#include "segpl/error.hpp"
#include "segpl/inference.hpp"
#include "segpl/losses.hpp"
#include "segpl/nn/unet.hpp"
#include "segpl/segcore.hpp"

namespace segpl {

struct IoUSummary {
  double mean = 0.0;
  double std = 0.0;
  int cases = 0;  // cases with at least one scorable channel
};

/// Mean and population standard deviation over the scorable cases.
inline IoUSummary summarise(const std::vector<std::optional<double>>& per_case) {
  IoUSummary s;
  for (const auto& v : per_case) {
    if (!v) continue;
    s.mean += *v;
    ++s.cases;
  }
  if (s.cases == 0) return s;
  s.mean /= s.cases;
  for (const auto& v : per_case) {
    if (v) s.std += (*v - s.mean) * (*v - s.mean);
  }
  s.std = std::sqrt(s.std / s.cases);
  return s;
}

struct EvalReport {
  std::vector<std::string> ids;
  std::vector<std::optional<double>> per_case;
  IoUSummary summary;

  void write_csv(const std::filesystem::path& path) const {
    csv::Writer w(path, {"case", "iou"});
    for (std::size_t i = 0; i < per_case.size(); ++i) {
      w.row({i < ids.size() ? ids[i] : std::to_string(i), csv::number(per_case[i])});
    }
  }

  nlohmann::json summary_json() const {
    return {{"mean_iou", summary.mean}, {"std_iou", summary.std}, {"cases", summary.cases}};
  }
};

namespace detail {
inline void require_test_set(const DataSplit& test) {
  if (test.size() == 0) throw DataError("test set is empty");
  if (!test.labelled()) throw DataError("test set has no labels");
}

inline EvalReport score(const UNet<float>& model, const Tensor<float>& images,
                        const DataSplit& test, const ThresholdMode& mode) {
  const Prediction p = predict(model, images);
  EvalReport r;
  r.ids = test.ids;
  r.per_case = iou_per_case(predict_masks(p, mode), MaskBatch(test.masks));
  r.summary = summarise(r.per_case);
  return r;
}

/// Independent stream per (seed, case), so results do not depend on order.
inline std::mt19937_64 case_rng(std::uint64_t seed, int index, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    stream, static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}
}  // namespace detail

inline EvalReport evaluate_iou(const UNet<float>& model, const DataSplit& test,
                               const ThresholdMode& mode) {
  detail::require_test_set(test);
  return detail::score(model, test.images, test, mode);
}

/// Bland-Altman pairs (mean, a - b) over cases scorable in both reports.
inline std::vector<std::pair<double, double>> bland_altman(const EvalReport& a,
                                                           const EvalReport& b) {
  if (a.per_case.size() != b.per_case.size()) {
    throw ShapeError("Bland-Altman needs equally many cases (" +
                     std::to_string(a.per_case.size()) + " vs " +
                     std::to_string(b.per_case.size()) + ")");
  }
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < a.per_case.size(); ++i) {
    if (!a.per_case[i] || !b.per_case[i]) continue;
    out.emplace_back((*a.per_case[i] + *b.per_case[i]) / 2.0, *a.per_case[i] - *b.per_case[i]);
  }
  return out;
}

struct PerturbConfig {
  std::vector<double> gamma_grid{0.0, 0.25, 0.5, 0.75, 1.0};
  std::pair<double, double> contrast_range{0.5, 1.5};
  double noise_std = 0.3;
  std::uint64_t seed = 0;

  void validate() const {
    if (gamma_grid.empty()) throw ConfigError("gamma grid is empty");
    for (double g : gamma_grid) {
      if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("gamma values must lie in [0, 1]");
    }
    if (!(contrast_range.first <= contrast_range.second) || !(contrast_range.first > 0.0)) {
      throw ConfigError("contrast range must satisfy 0 < lo <= hi");
    }
    if (!(noise_std >= 0.0)) throw ConfigError("OOD noise_std must be >= 0");
  }
};

struct AttackConfig {
  std::vector<double> epsilon_grid{0.0, 0.005, 0.01, 0.02};

  void validate() const {
    if (epsilon_grid.empty()) throw ConfigError("epsilon grid is empty");
    for (double e : epsilon_grid) {
      if (!(e >= 0.0)) throw ConfigError("epsilon must be >= 0, got " + std::to_string(e));
    }
    if (!std::is_sorted(epsilon_grid.begin(), epsilon_grid.end())) {
      throw ConfigError("epsilon grid must be sorted ascending");
    }
  }
};

struct SweepPoint {
  double strength = 0.0;
  EvalReport report;
};

inline void write_sweep_csv(const std::filesystem::path& path, const std::string& column,
                            const std::vector<SweepPoint>& points) {
  csv::Writer w(path, {column, "mean_iou", "std_iou", "cases"});
  for (const auto& p : points) {
    w.row({csv::number(p.strength), csv::number(p.report.summary.mean),
           csv::number(p.report.summary.std), std::to_string(p.report.summary.cases)});
  }
}

/// Fully perturbed version x' of every case: random global contrast, additive
/// Gaussian noise, then case-wise re-normalisation.
inline Tensor<float> ood_perturbed(const Tensor<float>& images, const PerturbConfig& cfg) {
  Tensor<float> out(images.shape());
  for (int b = 0; b < images.n(); ++b) {
    auto rng = detail::case_rng(cfg.seed, b, 0x00D);
    std::uniform_real_distribution<double> contrast(cfg.contrast_range.first,
                                                    cfg.contrast_range.second);
    std::normal_distribution<double> noise(0.0, 1.0);
    const double scale = contrast(rng);
    auto src = images.sample(b);
    auto dst = out.sample(b);
    for (std::size_t i = 0; i < src.size(); ++i) {
      dst[i] = static_cast<float>(scale * src[i] + cfg.noise_std * noise(rng));
    }
    normalise_case(dst);
  }
  return out;
}

/// gamma * x' + (1 - gamma) * x.
inline Tensor<float> ood_blend(const Tensor<float>& clean, const Tensor<float>& perturbed,
                               double gamma) {
  Tensor<float> out(clean.shape());
  const float g = static_cast<float>(gamma), h = static_cast<float>(1.0 - gamma);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = g * perturbed[i] + h * clean[i];
  return out;
}

inline std::vector<SweepPoint> ood_sweep(const UNet<float>& model, const DataSplit& test,
                                         const PerturbConfig& cfg, const ThresholdMode& mode) {
  cfg.validate();
  detail::require_test_set(test);
  const Tensor<float> perturbed = ood_perturbed(test.images, cfg);
  std::vector<SweepPoint> out;
  for (double gamma : cfg.gamma_grid) {
    out.push_back({gamma, detail::score(model, ood_blend(test.images, perturbed, gamma), test, mode)});
  }
  return out;
}

/// Gradient of the supervised Dice loss with respect to the input images.
/// Each image's gradient is that of its own Dice term.
inline Tensor<float> input_gradient(UNet<float>& model, const Tensor<float>& images,
                                    const Tensor<float>& masks, int chunk = 8) {
  Tensor<float> grad(images.shape());
  for (int first = 0; first < images.n(); first += chunk) {
    const int count = std::min(chunk, images.n() - first);
    UNet<float>::Trace trace;
    const auto out = model.forward(images.slice(first, count), &trace);
    Tensor<float> prob(out.logits.shape());
    for (std::size_t i = 0; i < prob.size(); ++i) prob[i] = sigmoid(out.logits[i]);
    Tensor<float> dprob;
    dice_loss(prob, masks.slice(first, count), &dprob, count);
    for (std::size_t i = 0; i < prob.size(); ++i) dprob[i] *= prob[i] * (1.0f - prob[i]);
    const Tensor<float> dx = model.backward(trace, dprob, nullptr, nullptr, true);
    std::copy(dx.storage().begin(), dx.storage().end(),
              grad.data() + first * images.shape().sample());
  }
  model.zero_grad();
  return grad;
}

/// x + epsilon * sign(grad); sign(0) = 0.
inline Tensor<float> fgsm_perturb(const Tensor<float>& images, const Tensor<float>& grad,
                                  double epsilon) {
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
  Tensor<float> out(images.shape());
  const float e = static_cast<float>(epsilon);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float s = grad[i] > 0.0f ? 1.0f : (grad[i] < 0.0f ? -1.0f : 0.0f);
    out[i] = images[i] + e * s;
  }
  return out;
}

inline std::vector<SweepPoint> fgsm_sweep(UNet<float>& model, const DataSplit& test,
                                          const AttackConfig& cfg, const ThresholdMode& mode) {
  cfg.validate();
  detail::require_test_set(test);
  const Tensor<float> grad = input_gradient(model, test.images, test.masks);
  std::vector<SweepPoint> out;
  for (double eps : cfg.epsilon_grid) {
    out.push_back({eps, detail::score(model, fgsm_perturb(test.images, grad, eps), test, mode)});
  }
  return out;
}

struct UncertaintyResult {
  ProbMap mean_prob;
  /// Fraction of threshold samples under which each pixel is foreground.
  Tensor<float> frequency;
  double brier = 0.0;
  int samples = 0;
};

inline constexpr int kDefaultMcSamples = 5;

/// Draws `n_samples` thresholds per (image, class) from the learned
/// posterior and binarises the prediction under each.
inline UncertaintyResult mc_uncertainty(const UNet<float>& model, const DataSplit& test,
                                        int n_samples = kDefaultMcSamples,
                                        std::uint64_t seed = 0) {
  if (!model.has_threshold_head()) {
    throw CapabilityError("uncertainty sampling needs a segpl_vi checkpoint with a threshold head");
  }
  if (n_samples < 1) throw ConfigError("number of Monte-Carlo samples must be >= 1");
  detail::require_test_set(test);
  const Prediction p = predict(model, test.images);
  const Shape4 s = p.prob.shape();
  std::vector<int> counts(s.size(), 0);
  for (int b = 0; b < s.n; ++b) {
    auto rng = detail::case_rng(seed, b, 0x3C);
    ThresholdHeadOutput post;
    post.images = 1;
    post.classes = s.c;
    post.mu.assign(p.head.mu.begin() + b * s.c, p.head.mu.begin() + (b + 1) * s.c);
    post.log_sigma.assign(p.head.log_sigma.begin() + b * s.c,
                          p.head.log_sigma.begin() + (b + 1) * s.c);
    for (int n = 0; n < n_samples; ++n) {
      const ThresholdSample t = sample_threshold(post, rng);
      for (int k = 0; k < s.c; ++k) {
        auto prob = p.prob.tensor().plane(b, k);
        const std::size_t off = p.prob.tensor().index(b, k, 0, 0);
        for (std::size_t i = 0; i < prob.size(); ++i) counts[off + i] += prob[i] > t.value[k];
      }
    }
  }
  UncertaintyResult r;
  r.samples = n_samples;
  r.frequency = Tensor<float>(s);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    r.frequency[i] = static_cast<float>(counts[i]) / static_cast<float>(n_samples);
  }
  r.brier = brier(ProbMap(r.frequency), MaskBatch(test.masks));
  r.mean_prob = p.prob;
  return r;
}

}  // namespace segpl

#endif  // SEGPL_EVALSUITE_HPP_
