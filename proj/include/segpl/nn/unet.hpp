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

#ifndef SEGPL_NN_UNET_HPP_
#define SEGPL_NN_UNET_HPP_

// Compact 2D U-Net backbone plus the variational threshold head, which maps
// bottleneck features to a per-image, per-class Gaussian (mu, log sigma)
// over the pseudo-label threshold.

#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "segpl/error.hpp"
#include "segpl/nn/layers.hpp"
#include "segpl/tensor.hpp"

namespace segpl {

struct UNetConfig {
  int in_channels = 1;
  int num_classes = 1;
  int base_width = 16;
  int depth = 4;
  bool threshold_head = false;
  std::uint64_t init_seed = 0;

  void validate() const {
    if (in_channels < 1) throw ConfigError("unet.in_channels must be >= 1");
    if (num_classes < 1) throw ConfigError("unet.num_classes must be >= 1");
    if (base_width < 4) throw ConfigError("unet.base_width must be >= 4");
    if (depth < 2) throw ConfigError("unet.depth must be >= 2");
  }

  /// Spatial sizes must be divisible by this.
  int spatial_multiple() const { return 1 << depth; }
};

inline void to_json(nlohmann::json& j, const UNetConfig& c) {
  j = {{"in_channels", c.in_channels}, {"num_classes", c.num_classes},
       {"base_width", c.base_width},   {"depth", c.depth},
       {"threshold_head", c.threshold_head}, {"init_seed", c.init_seed}};
}

inline void from_json(const nlohmann::json& j, UNetConfig& c) {
  c.in_channels = j.at("in_channels").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.base_width = j.at("base_width").get<int>();
  c.depth = j.at("depth").get<int>();
  c.threshold_head = j.value("threshold_head", false);
  c.init_seed = j.value("init_seed", std::uint64_t{0});
}

/// Per-image, per-class posterior parameters, stored row-major (image, class).
template <typename T>
struct HeadOutput {
  int images = 0;
  int classes = 0;
  std::vector<T> mu;
  std::vector<T> log_sigma;

  T sigma(int b, int k) const { return std::exp(log_sigma[b * classes + k]); }
};

using ThresholdHeadOutput = HeadOutput<float>;

namespace nn {

template <typename T>
class Sequential {
 public:
  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor<T> forward(Tensor<T> x, std::vector<LayerCache<T>>* caches) const {
    if (caches) caches->assign(layers_.size(), {});
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      x = layers_[i]->forward(x, caches ? &(*caches)[i] : nullptr);
    }
    return x;
  }

  Tensor<T> backward(Tensor<T> dy, const std::vector<LayerCache<T>>& caches,
                     bool need_dx) {
    for (std::size_t i = layers_.size(); i-- > 0;) {
      dy = layers_[i]->backward(dy, caches[i], need_dx || i > 0);
    }
    return dy;
  }

  void collect(std::vector<Param<T>*>& out) {
    for (auto& l : layers_) l->collect(out);
  }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// conv3x3 -> GroupNorm -> ReLU, twice.
template <typename T>
Sequential<T> conv_block(const std::string& name, int in, int out, std::mt19937_64& rng) {
  Sequential<T> s;
  s.template add<Conv2d<T>>(name + ".conv1", in, out, 3).init_he(rng);
  s.template add<GroupNorm<T>>(name + ".norm1", out, norm_groups(out));
  s.template add<ReLU<T>>();
  s.template add<Conv2d<T>>(name + ".conv2", out, out, 3).init_he(rng);
  s.template add<GroupNorm<T>>(name + ".norm2", out, norm_groups(out));
  s.template add<ReLU<T>>();
  return s;
}

}  // namespace nn

/// Mean of the initial posterior over the threshold.
inline constexpr double kInitialThresholdMean = 0.5;
/// Standard deviation of the initial posterior over the threshold.
inline constexpr double kInitialThresholdSigma = 0.1;

template <typename T>
class UNet {
 public:
  struct Output {
    Tensor<T> logits;
    HeadOutput<T> head;  // empty unless the model has a threshold head
  };

  /// Activations kept by forward for backward.
  struct Trace {
    std::vector<std::vector<nn::LayerCache<T>>> encoder, decoder;
    std::vector<nn::LayerCache<T>> pool, up, bottleneck, head, mu, log_sigma;
    nn::LayerCache<T> output;
    std::vector<int> skip_channels;
    Shape4 head_grid{};
  };

  explicit UNet(const UNetConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.init_seed);
    int in = cfg_.in_channels;
    for (int l = 0; l < cfg_.depth; ++l) {
      const int w = width(l);
      encoder_.push_back(nn::conv_block<T>("encoder." + std::to_string(l), in, w, rng));
      in = w;
    }
    bottleneck_ = nn::conv_block<T>("bottleneck", in, width(cfg_.depth), rng);
    for (int l = 0; l < cfg_.depth; ++l) {
      const std::string name = "decoder." + std::to_string(l);
      up_.push_back(std::make_unique<nn::UpConv2x2<T>>(name + ".up", width(l + 1), width(l)));
      up_.back()->init_he(rng);
      decoder_.push_back(nn::conv_block<T>(name, 2 * width(l), width(l), rng));
    }
    output_ = std::make_unique<nn::Conv2d<T>>("output", width(0), cfg_.num_classes, 1);
    output_->init_he(rng, T(1));

    if (cfg_.threshold_head) {
      const int hidden = cfg_.base_width;
      head_.template add<nn::AdaptiveAvgPool<T>>(3);
      head_.template add<nn::Conv2d<T>>("head.conv", width(cfg_.depth), hidden, 3).init_he(rng);
      head_.template add<nn::GroupNorm<T>>("head.norm", hidden, nn::norm_groups(hidden));
      head_.template add<nn::ReLU<T>>();
      auto& mu = mu_.template add<nn::Conv2d<T>>("head.mu", hidden, cfg_.num_classes, 1);
      auto& ls = log_sigma_.template add<nn::Conv2d<T>>("head.log_sigma", hidden,
                                                         cfg_.num_classes, 1);
      std::fill(mu.bias().value.begin(), mu.bias().value.end(), T(kInitialThresholdMean));
      std::fill(ls.bias().value.begin(), ls.bias().value.end(),
                T(std::log(kInitialThresholdSigma)));
    }
  }

  UNet(const UNet&) = delete;
  UNet& operator=(const UNet&) = delete;
  UNet(UNet&&) noexcept = default;
  UNet& operator=(UNet&&) noexcept = default;

  const UNetConfig& config() const { return cfg_; }
  bool has_threshold_head() const { return cfg_.threshold_head; }
  int width(int level) const { return cfg_.base_width << level; }

  void check_input(const Shape4& s) const {
    const int m = cfg_.spatial_multiple();
    if (s.c != cfg_.in_channels) {
      throw ShapeError("model expects " + std::to_string(cfg_.in_channels) +
                       " input channels, got " + s.str());
    }
    if (s.h % m != 0 || s.w % m != 0) {
      throw ShapeError("spatial size " + s.str() + " not divisible by 2^depth = " +
                       std::to_string(m));
    }
  }

  /// Logits (B x K x H x W) and, when present, threshold posterior parameters.
  Output forward(const Tensor<T>& x, Trace* trace = nullptr) const {
    check_input(x.shape());
    const int depth = cfg_.depth;
    if (trace) {
      trace->encoder.assign(depth, {});
      trace->decoder.assign(depth, {});
      trace->pool.assign(depth, {});
      trace->up.assign(depth, {});
    }
    std::vector<Tensor<T>> skips(depth);
    Tensor<T> h = x;
    for (int l = 0; l < depth; ++l) {
      skips[l] = encoder_[l].forward(std::move(h), trace ? &trace->encoder[l] : nullptr);
      h = pool_.forward(skips[l], trace ? &trace->pool[l] : nullptr);
    }
    Tensor<T> features = bottleneck_.forward(std::move(h), trace ? &trace->bottleneck : nullptr);

    Output out;
    if (cfg_.threshold_head) out.head = head_forward(features, trace);

    h = std::move(features);
    for (int l = depth - 1; l >= 0; --l) {
      Tensor<T> u = up_[l]->forward(h, trace ? &trace->up[l] : nullptr);
      h = decoder_[l].forward(concat_channels(u, skips[l]),
                              trace ? &trace->decoder[l] : nullptr);
    }
    out.logits = output_->forward(h, trace ? &trace->output : nullptr);
    return out;
  }

  /// Threshold head on precomputed bottleneck features.
  HeadOutput<T> head_forward(const Tensor<T>& features, Trace* trace = nullptr) const {
    if (!cfg_.threshold_head) throw CapabilityError("model has no threshold head");
    Tensor<T> hidden = head_.forward(features, trace ? &trace->head : nullptr);
    Tensor<T> mu_map = mu_.forward(hidden, trace ? &trace->mu : nullptr);
    Tensor<T> ls_map = log_sigma_.forward(hidden, trace ? &trace->log_sigma : nullptr);
    if (trace) trace->head_grid = mu_map.shape();
    HeadOutput<T> out;
    out.images = mu_map.n();
    out.classes = mu_map.c();
    out.mu = spatial_mean(mu_map);
    out.log_sigma = spatial_mean(ls_map);
    return out;
  }

  /// Backpropagates dL/dlogits (and optionally dL/dmu, dL/dlog_sigma, each
  /// B*K row-major) through the trace. Parameter gradients accumulate; the
  /// returned tensor is dL/dinput when `need_input_grad`, else empty.
  Tensor<T> backward(const Trace& trace, const Tensor<T>& dlogits,
                     const std::vector<T>* dmu = nullptr,
                     const std::vector<T>* dlog_sigma = nullptr,
                     bool need_input_grad = false) {
    const int depth = cfg_.depth;
    Tensor<T> d = output_->backward(dlogits, trace.output, true);
    std::vector<Tensor<T>> dskip(depth);
    for (int l = 0; l < depth; ++l) {
      Tensor<T> dcat = decoder_[l].backward(std::move(d), trace.decoder[l], true);
      auto [du, ds] = split_channels(dcat, width(l));
      dskip[l] = std::move(ds);
      d = up_[l]->backward(du, trace.up[l], true);
    }
    if (cfg_.threshold_head && (dmu || dlog_sigma)) {
      add_inplace(d, head_backward(trace, dmu, dlog_sigma));
    }
    d = bottleneck_.backward(std::move(d), trace.bottleneck, true);
    for (int l = depth - 1; l >= 0; --l) {
      d = pool_.backward(d, trace.pool[l], true);
      add_inplace(d, dskip[l]);
      d = encoder_[l].backward(std::move(d), trace.encoder[l], l > 0 || need_input_grad);
    }
    return need_input_grad ? d : Tensor<T>{};
  }

  std::vector<nn::Param<T>*> parameters() {
    std::vector<nn::Param<T>*> out;
    for (auto& e : encoder_) e.collect(out);
    bottleneck_.collect(out);
    for (int l = 0; l < cfg_.depth; ++l) {
      up_[l]->collect(out);
      decoder_[l].collect(out);
    }
    output_->collect(out);
    head_.collect(out);
    mu_.collect(out);
    log_sigma_.collect(out);
    return out;
  }

  std::vector<const nn::Param<T>*> parameters() const {
    auto ps = const_cast<UNet*>(this)->parameters();
    return {ps.begin(), ps.end()};
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->size();
    return n;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  /// Zeroes the final 1x1 convolution so every logit is exactly 0.
  void zero_output_layer() {
    std::fill(output_->weight().value.begin(), output_->weight().value.end(), T(0));
    std::fill(output_->bias().value.begin(), output_->bias().value.end(), T(0));
  }

  /// Parameter values keyed by hierarchical name.
  std::map<std::string, std::vector<T>> state() const {
    std::map<std::string, std::vector<T>> s;
    for (const auto* p : parameters()) s[p->name].assign(p->value.begin(), p->value.end());
    return s;
  }

  template <typename U>
  void load_state(const std::map<std::string, std::vector<U>>& s) {
    for (auto* p : parameters()) {
      auto it = s.find(p->name);
      if (it == s.end()) throw DataError("state is missing parameter '" + p->name + "'");
      if (it->second.size() != p->size()) {
        throw ShapeError("parameter '" + p->name + "' has " +
                         std::to_string(it->second.size()) + " values, expected " +
                         std::to_string(p->size()));
      }
      std::transform(it->second.begin(), it->second.end(), p->value.begin(),
                     [](U v) { return static_cast<T>(v); });
    }
  }

 private:
  static Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> out(Shape4{a.n(), a.c() + b.c(), a.h(), a.w()});
    for (int n = 0; n < a.n(); ++n) {
      auto sa = a.sample(n);
      auto sb = b.sample(n);
      auto dst = out.sample(n);
      std::copy(sa.begin(), sa.end(), dst.begin());
      std::copy(sb.begin(), sb.end(), dst.begin() + sa.size());
    }
    return out;
  }

  static std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int first) {
    Tensor<T> a(Shape4{x.n(), first, x.h(), x.w()});
    Tensor<T> b(Shape4{x.n(), x.c() - first, x.h(), x.w()});
    for (int n = 0; n < x.n(); ++n) {
      auto src = x.sample(n);
      std::copy(src.begin(), src.begin() + a.shape().sample(), a.sample(n).begin());
      std::copy(src.begin() + a.shape().sample(), src.end(), b.sample(n).begin());
    }
    return {std::move(a), std::move(b)};
  }

  static void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  }

  static std::vector<T> spatial_mean(const Tensor<T>& m) {
    std::vector<T> out(static_cast<std::size_t>(m.n()) * m.c());
    for (int b = 0; b < m.n(); ++b) {
      for (int k = 0; k < m.c(); ++k) {
        T acc = T(0);
        for (T v : m.plane(b, k)) acc += v;
        out[b * m.c() + k] = acc / T(m.shape().plane());
      }
    }
    return out;
  }

  static Tensor<T> spread_mean_grad(const std::vector<T>& g, const Shape4& grid) {
    Tensor<T> out(grid);
    const T scale = T(1) / T(grid.plane());
    for (int b = 0; b < grid.n; ++b) {
      for (int k = 0; k < grid.c; ++k) {
        for (T& v : out.plane(b, k)) v = g[b * grid.c + k] * scale;
      }
    }
    return out;
  }

  Tensor<T> head_backward(const Trace& trace, const std::vector<T>* dmu,
                          const std::vector<T>* dlog_sigma) {
    const Shape4 grid = trace.head_grid;
    const std::vector<T> zeros(static_cast<std::size_t>(grid.n) * grid.c, T(0));
    Tensor<T> dh = mu_.backward(spread_mean_grad(dmu ? *dmu : zeros, grid), trace.mu, true);
    add_inplace(dh, log_sigma_.backward(
                        spread_mean_grad(dlog_sigma ? *dlog_sigma : zeros, grid),
                        trace.log_sigma, true));
    return head_.backward(std::move(dh), trace.head, true);
  }

  UNetConfig cfg_;
  std::vector<nn::Sequential<T>> encoder_;
  nn::Sequential<T> bottleneck_;
  std::vector<std::unique_ptr<nn::UpConv2x2<T>>> up_;
  std::vector<nn::Sequential<T>> decoder_;
  std::unique_ptr<nn::Conv2d<T>> output_;
  nn::MaxPool2<T> pool_;
  nn::Sequential<T> head_, mu_, log_sigma_;
};

}  // namespace segpl

#endif  // SEGPL_NN_UNET_HPP_
