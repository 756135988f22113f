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

#ifndef SEGPL_TRAINER_HPP_
#define SEGPL_TRAINER_HPP_

// Generalised EM training: every step runs the E-step (pseudo-labels from
// the current model, gradient-free) and one Adam M-step on the variant's
// loss over a labelled mini-batch plus ratio x batch unlabelled images.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "segpl/csv.hpp"
#include "segpl/datagen.hpp"
#include "segpl/em.hpp"
#include "segpl/error.hpp"
#include "segpl/inference.hpp"
#include "segpl/losses.hpp"
#include "segpl/nn/unet.hpp"

namespace segpl {

enum class Variant { kSegPL, kSegPLVI, kSupervisedOnly };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kSegPL: return "segpl";
    case Variant::kSegPLVI: return "segpl_vi";
    case Variant::kSupervisedOnly: return "supervised_only";
  }
  return "segpl";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "segpl") return Variant::kSegPL;
  if (s == "segpl_vi") return Variant::kSegPLVI;
  if (s == "supervised_only") return Variant::kSupervisedOnly;
  throw ConfigError("unknown variant '" + s + "' (expected segpl, segpl_vi or supervised_only)");
}

struct TrainConfig {
  int batch_size_labelled = 2;
  /// Unlabelled images per labelled image in each step.
  int ratio_unlabelled = 5;
  double learning_rate = 0.01;
  int total_steps = 200;
  double alpha = 0.05;
  /// Fraction of total_steps over which alpha ramps linearly from 0.
  double alpha_warmup_fraction = 0.0;
  Variant variant = Variant::kSegPL;
  PriorConfig prior{};
  double fixed_threshold = 0.5;
  double kl_weight = 1.0;
  std::uint64_t seed = 0;
  int val_every = 25;
  int base_width = 16;
  int depth = 4;

  void validate() const {
    if (batch_size_labelled < 1) throw ConfigError("batch_size_labelled must be >= 1");
    if (ratio_unlabelled < 0) throw ConfigError("ratio_unlabelled must be >= 0");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("learning_rate must be > 0");
    }
    if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be >= 0");
    if (!(alpha_warmup_fraction >= 0.0 && alpha_warmup_fraction <= 1.0)) {
      throw ConfigError("alpha_warmup_fraction must lie in [0, 1]");
    }
    if (!(fixed_threshold > 0.0 && fixed_threshold < 1.0)) {
      throw ConfigError("fixed_threshold must lie in (0, 1)");
    }
    if (!(kl_weight >= 0.0)) throw ConfigError("kl_weight must be >= 0");
    if (val_every < 1) throw ConfigError("val_every must be >= 1");
    if (base_width < 4) throw ConfigError("base_width must be >= 4");
    if (depth < 2) throw ConfigError("depth must be >= 2");
    prior.validate();
  }

  /// Effective unsupervised weight at 0-based `step`.
  double alpha_at(int step) const {
    const double warm = alpha_warmup_fraction * total_steps;
    if (warm <= 0.0) return alpha;
    return alpha * std::min(1.0, step / warm);
  }

  bool uses_unlabelled() const {
    return variant != Variant::kSupervisedOnly && ratio_unlabelled > 0;
  }

  UNetConfig model_config(int in_channels, int num_classes) const {
    UNetConfig u;
    u.in_channels = in_channels;
    u.num_classes = num_classes;
    u.base_width = base_width;
    u.depth = depth;
    u.threshold_head = variant == Variant::kSegPLVI;
    u.init_seed = seed;
    return u;
  }

  /// Named presets: "brats-paper", "carve-paper", "synthetic-fast".
  static TrainConfig preset(const std::string& name) {
    TrainConfig c;
    if (name == "brats-paper") {
      c.batch_size_labelled = 2;
      c.learning_rate = 0.03;
      c.total_steps = 200;
      c.alpha = 0.05;
      c.ratio_unlabelled = 5;
      c.prior = PriorConfig::preset("brats");
      c.base_width = 16;
      c.depth = 4;
      return c;
    }
    if (name == "carve-paper") {
      c.batch_size_labelled = 2;
      c.learning_rate = 0.01;
      c.total_steps = 800;
      c.alpha = 1.0;
      c.ratio_unlabelled = 4;
      c.prior = PriorConfig::preset("carve");
      c.base_width = 8;
      c.depth = 4;
      return c;
    }
    if (name == "synthetic-fast") {
      c.batch_size_labelled = 2;
      c.learning_rate = 0.01;
      c.total_steps = 600;
      c.alpha = 0.5;
      c.alpha_warmup_fraction = 0.3;
      c.ratio_unlabelled = 5;
      c.prior = PriorConfig::preset("brats");
      c.base_width = 8;
      c.depth = 3;
      return c;
    }
    throw ConfigError("unknown training preset '" + name + "'");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size_labelled", c.batch_size_labelled},
       {"ratio_unlabelled", c.ratio_unlabelled},
       {"learning_rate", c.learning_rate},
       {"total_steps", c.total_steps},
       {"alpha", c.alpha},
       {"alpha_warmup_fraction", c.alpha_warmup_fraction},
       {"variant", to_string(c.variant)},
       {"prior", c.prior},
       {"fixed_threshold", c.fixed_threshold},
       {"kl_weight", c.kl_weight},
       {"seed", c.seed},
       {"val_every", c.val_every},
       {"base_width", c.base_width},
       {"depth", c.depth}};
}

/// Overlays the fields present in `j` onto `c`; unknown keys are rejected.
inline void merge_json(const nlohmann::json& j, TrainConfig& c) {
  static const std::vector<std::string> known = {
      "batch_size_labelled", "ratio_unlabelled", "learning_rate", "total_steps",
      "alpha", "alpha_warmup_fraction", "variant", "prior", "fixed_threshold",
      "kl_weight", "seed", "val_every", "base_width", "depth"};
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown training config field '" + key + "'");
    }
  }
  auto field = [&](const char* key, auto& dst) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(dst);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("config field '") + key + "' has the wrong type");
    }
  };
  field("batch_size_labelled", c.batch_size_labelled);
  field("ratio_unlabelled", c.ratio_unlabelled);
  field("learning_rate", c.learning_rate);
  field("total_steps", c.total_steps);
  field("alpha", c.alpha);
  field("alpha_warmup_fraction", c.alpha_warmup_fraction);
  if (j.contains("variant")) {
    if (!j["variant"].is_string()) throw ConfigError("config field 'variant' must be a string");
    c.variant = variant_from_string(j["variant"].get<std::string>());
  }
  if (j.contains("prior")) {
    try {
      c.prior = j.at("prior").get<PriorConfig>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config field 'prior' needs numeric mu_beta and sigma_beta");
    }
  }
  field("fixed_threshold", c.fixed_threshold);
  field("kl_weight", c.kl_weight);
  field("seed", c.seed);
  field("val_every", c.val_every);
  field("base_width", c.base_width);
  field("depth", c.depth);
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  merge_json(j, c);
}

/// Adaptive-moment gradient descent over a fixed parameter list.
class Adam {
 public:
  explicit Adam(std::vector<nn::Param<float>*> params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const auto* p : params_) {
      m_.emplace_back(p->size(), 0.0f);
      v_.emplace_back(p->size(), 0.0f);
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_), c2 = 1.0 - std::pow(b2_, t_);
    const float step = static_cast<float>(lr_ * std::sqrt(c2) / c1);
    const float b1 = float(b1_), b2 = float(b2_), eps = float(eps_ * std::sqrt(c2));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const float g = p.grad[i];
        m[i] = b1 * m[i] + (1.0f - b1) * g;
        v[i] = b2 * v[i] + (1.0f - b2) * g * g;
        p.value[i] -= step * m[i] / (std::sqrt(v[i]) + eps);
      }
    }
  }

  int steps_taken() const { return t_; }

 private:
  std::vector<nn::Param<float>*> params_;
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

struct TrainRecord {
  int step = 0;
  LossBreakdown loss;
  double threshold_mean = std::numeric_limits<double>::quiet_NaN();
  double mu_mean = std::numeric_limits<double>::quiet_NaN();
  double sigma_mean = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> val_iou;
};

struct TrainLog {
  std::vector<TrainRecord> records;

  void write_csv(const std::filesystem::path& path) const {
    csv::Writer w(path, {"step", "supervised", "unsupervised", "kl", "total",
                         "alpha_effective", "threshold_mean", "mu_mean", "sigma_mean",
                         "val_iou"});
    for (const auto& r : records) {
      w.row({std::to_string(r.step), csv::number(r.loss.supervised),
             csv::number(r.loss.unsupervised), csv::number(r.loss.kl),
             csv::number(r.loss.total), csv::number(r.loss.alpha_effective),
             csv::number(r.threshold_mean), csv::number(r.mu_mean),
             csv::number(r.sigma_mean), csv::number(r.val_iou)});
    }
  }
};

struct TrainResult {
  TrainLog log;
  std::map<std::string, std::vector<float>> best_state;
  std::optional<double> best_val_iou;
  int best_step = -1;
};

/// Raised when the loss or gradients stop being finite. The model still
/// holds the parameters from before the failing step.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(int step, const std::string& what)
      : NumericError("training diverged at step " + std::to_string(step) + ": " + what),
        step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

/// Threshold mode used when scoring a model trained with `variant`.
inline ThresholdMode default_threshold_mode(const TrainConfig& cfg) {
  if (cfg.variant == Variant::kSegPLVI) return ThresholdMode::posterior_mean();
  return ThresholdMode::fixed(static_cast<float>(cfg.fixed_threshold));
}

inline double validation_iou(const UNet<float>& model, const DataSplit& val,
                             const ThresholdMode& mode) {
  const Prediction p = predict(model, val.images);
  return iou(predict_masks(p, mode), MaskBatch(val.masks));
}

/// Runs `cfg.total_steps` EM iterations on `model` in place.
inline TrainResult train(UNet<float>& model, const Dataset& data, const TrainConfig& cfg,
                         const std::function<void(const TrainRecord&)>& on_step = {}) {
  cfg.validate();
  const DataSplit& lab = data.labelled;
  const DataSplit& unl = data.unlabelled;
  if (lab.size() == 0 || !lab.labelled()) throw DataError("labelled set is empty");
  if (cfg.uses_unlabelled() && unl.size() == 0) {
    throw DataError("unlabelled set is empty but variant " + to_string(cfg.variant) +
                    " with ratio " + std::to_string(cfg.ratio_unlabelled) + " needs it");
  }
  const bool vi = cfg.variant == Variant::kSegPLVI;
  if (vi && !model.has_threshold_head()) {
    throw CapabilityError("segpl_vi training needs a model with a threshold head");
  }
  if (lab.masks.c() != model.config().num_classes) {
    throw ShapeError("labels have " + std::to_string(lab.masks.c()) + " channels, model predicts " +
                     std::to_string(model.config().num_classes));
  }

  std::mt19937_64 rng(cfg.seed);
  Adam opt(model.parameters(), cfg.learning_rate);
  const ThresholdMode eval_mode = default_threshold_mode(cfg);
  const int n_l = cfg.batch_size_labelled;
  const int n_u = cfg.uses_unlabelled() ? cfg.ratio_unlabelled * n_l : 0;
  std::uniform_int_distribution<int> pick_l(0, lab.size() - 1);
  std::uniform_int_distribution<int> pick_u(0, std::max(0, unl.size() - 1));

  TrainResult result;
  result.log.records.reserve(cfg.total_steps);
  for (int step = 0; step < cfg.total_steps; ++step) {
    std::vector<int> ids_l(n_l), ids_u(n_u);
    for (int& i : ids_l) i = pick_l(rng);
    for (int& i : ids_u) i = pick_u(rng);
    const Tensor<float> x = concat_batch(lab.images.gather(ids_l), n_u ? unl.images.gather(ids_u)
                                                                       : Tensor<float>{});
    const MaskBatch y_l(lab.masks.gather(ids_l));

    UNet<float>::Trace trace;
    const auto out = model.forward(x, &trace);
    if (!out.logits.all_finite()) throw TrainingDiverged(step, "non-finite logits");
    const ProbMap prob = ProbMap::from_logits(out.logits);
    const ProbMap prob_l(prob.tensor().slice(0, n_l));
    const ProbMap prob_u(prob.tensor().slice(n_l, n_u));

    // E-step.
    ThresholdHeadOutput post;
    PseudoLabelBatch pseudo;
    if (vi && n_u > 0) {
      const int k = out.head.classes;
      post.images = n_u;
      post.classes = k;
      post.mu.assign(out.head.mu.begin() + n_l * k, out.head.mu.end());
      post.log_sigma.assign(out.head.log_sigma.begin() + n_l * k, out.head.log_sigma.end());
      pseudo = pseudo_label_vi(prob_u, post, rng);
    } else {
      pseudo = pseudo_label_fixed(prob_u, static_cast<float>(cfg.fixed_threshold));
    }

    // M-step.
    const double alpha = cfg.variant == Variant::kSupervisedOnly ? 0.0 : cfg.alpha_at(step);
    LossGradients g;
    const LossBreakdown loss =
        vi ? segpl_vi_loss(prob_l, y_l, prob_u, pseudo, alpha, post, cfg.prior, cfg.kl_weight, &g)
           : segpl_loss(prob_l, y_l, prob_u, pseudo, alpha, &g);
    if (!std::isfinite(loss.total)) throw TrainingDiverged(step, "non-finite loss");

    Tensor<float> dlogits(out.logits.shape());
    const std::size_t split = g.prob_labelled.size();
    for (std::size_t i = 0; i < dlogits.size(); ++i) {
      const float p = prob.tensor()[i];
      const float dp = i < split ? g.prob_labelled[i] : g.prob_unlabelled[i - split];
      dlogits[i] = dp * p * (1.0f - p);
    }
    model.zero_grad();
    if (vi) {
      const int k = model.config().num_classes;
      std::vector<float> dmu((n_l + n_u) * k, 0.0f), dls((n_l + n_u) * k, 0.0f);
      std::copy(g.mu.begin(), g.mu.end(), dmu.begin() + n_l * k);
      std::copy(g.log_sigma.begin(), g.log_sigma.end(), dls.begin() + n_l * k);
      model.backward(trace, dlogits, &dmu, &dls);
    } else {
      model.backward(trace, dlogits);
    }
    for (const auto* p : model.parameters()) {
      for (float v : p->grad) {
        if (!std::isfinite(v)) throw TrainingDiverged(step, "non-finite gradient in " + p->name);
      }
    }
    opt.step();

    TrainRecord rec;
    rec.step = step;
    rec.loss = loss;
    if (!pseudo.threshold_used.empty()) {
      double s = 0.0;
      for (float t : pseudo.threshold_used) s += t;
      rec.threshold_mean = s / pseudo.threshold_used.size();
    }
    if (!post.mu.empty()) {
      double sm = 0.0, ss = 0.0;
      for (std::size_t i = 0; i < post.mu.size(); ++i) {
        sm += post.mu[i];
        ss += std::exp(double(post.log_sigma[i]));
      }
      rec.mu_mean = sm / post.mu.size();
      rec.sigma_mean = ss / post.mu.size();
    }
    const bool last = step + 1 == cfg.total_steps;
    if (data.val.size() > 0 && data.val.labelled() && ((step + 1) % cfg.val_every == 0 || last)) {
      rec.val_iou = validation_iou(model, data.val, eval_mode);
      if (!result.best_val_iou || *rec.val_iou > *result.best_val_iou) {
        result.best_val_iou = rec.val_iou;
        result.best_step = step;
        result.best_state = model.state();
      }
    }
    result.log.records.push_back(rec);
    if (on_step) on_step(rec);
  }
  return result;
}

}  // namespace segpl

#endif  // SEGPL_TRAINER_HPP_
