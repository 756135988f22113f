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

#ifndef SEGPL_NN_LAYERS_HPP_
#define SEGPL_NN_LAYERS_HPP_

// Minimal layer set for a 2D U-Net with hand-written backward passes.
// Layers own their parameters; activations needed by backward are kept in
// a caller-owned LayerCache so a frozen model can run forward concurrently.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "segpl/error.hpp"
#include "segpl/tensor.hpp"

namespace segpl::nn {

template <typename T>
using MatrixRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatrixRM<T>>;
template <typename T>
using ConstMapRM = Eigen::Map<const MatrixRM<T>>;

/// Trainable array with its gradient accumulator.
template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  AlignedVector<T> value;
  AlignedVector<T> grad;

  Param() = default;
  Param(std::string n, std::vector<int> s, T fill = T(0)) : name(std::move(n)), shape(std::move(s)) {
    const auto count = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                       [](std::size_t a, int b) { return a * b; });
    value.assign(count, fill);
    grad.assign(count, T(0));
  }
  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

/// Whatever a layer needs to keep between forward and backward.
template <typename T>
struct LayerCache {
  Tensor<T> input;
  Tensor<T> output;
  std::vector<T> stats;
  std::vector<int> index;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const = 0;
  /// Accumulates parameter gradients; returns dL/dx when `need_dx`.
  virtual Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                             bool need_dx) = 0;
  virtual void collect(std::vector<Param<T>*>&) {}
};

namespace detail {

// Row (c, ky, kx), column (y, x) of the patch matrix for a stride-1 square
// kernel with zero padding k/2.
template <typename T>
void im2col(const T* x, int channels, int h, int w, int k, T* col) {
  const int pad = k / 2;
  const int hw = h * w;
  for (int c = 0; c < channels; ++c) {
    const T* plane = x + c * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + ((c * k + ky) * k + kx) * hw;
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          T* dst = row + y * w;
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          std::fill(dst, dst + x0, T(0));
          std::copy(plane + sy * w + x0 + dx, plane + sy * w + x1 + dx, dst + x0);
          std::fill(dst + x1, dst + w, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int channels, int h, int w, int k, T* x) {
  const int pad = k / 2;
  const int hw = h * w;
  for (int c = 0; c < channels; ++c) {
    T* plane = x + c * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + ((c * k + ky) * k + kx) * hw;
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const T* src = row + y * w;
          T* dst = plane + sy * w + dx;
          for (int xx = x0; xx < x1; ++xx) dst[xx] += src[xx];
        }
      }
    }
  }
}

}  // namespace detail

/// Stride-1 convolution with odd square kernel and "same" zero padding.
template <typename T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(std::string name, int in, int out, int kernel)
      : in_(in), out_(out), k_(kernel),
        weight_(name + ".weight", {out, in, kernel, kernel}),
        bias_(name + ".bias", {out}) {
    if (kernel % 2 != 1) throw ConfigError("convolution kernel must be odd");
  }

  /// He-normal weights, zero bias.
  void init_he(std::mt19937_64& rng, T gain = T(2)) {
    std::normal_distribution<double> nd(0.0, std::sqrt(double(gain) / (in_ * k_ * k_)));
    for (auto& v : weight_.value) v = static_cast<T>(nd(rng));
    std::fill(bias_.value.begin(), bias_.value.end(), T(0));
  }

  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override {
    if (x.c() != in_) {
      throw ShapeError(weight_.name + " expects " + std::to_string(in_) +
                       " channels, got " + x.shape().str());
    }
    const int hw = x.h() * x.w();
    const int rows = in_ * k_ * k_;
    Tensor<T> y(Shape4{x.n(), out_, x.h(), x.w()});
    ConstMapRM<T> wm(weight_.value.data(), out_, rows);
    AlignedVector<T> col(k_ == 1 ? 0 : static_cast<std::size_t>(rows) * hw);
    for (int b = 0; b < x.n(); ++b) {
      const T* src = x.sample(b).data();
      if (k_ != 1) {
        detail::im2col(src, in_, x.h(), x.w(), k_, col.data());
        src = col.data();
      }
      MapRM<T> ym(y.sample(b).data(), out_, hw);
      ym.noalias() = wm * ConstMapRM<T>(src, rows, hw);
      for (int o = 0; o < out_; ++o) ym.row(o).array() += bias_.value[o];
    }
    if (cache) cache->input = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                     bool need_dx) override {
    const Tensor<T>& x = cache.input;
    const int hw = x.h() * x.w();
    const int rows = in_ * k_ * k_;
    ConstMapRM<T> wm(weight_.value.data(), out_, rows);
    MapRM<T> gw(weight_.grad.data(), out_, rows);
    Tensor<T> dx;
    if (need_dx) dx = Tensor<T>(x.shape());
    AlignedVector<T> col(k_ == 1 ? 0 : static_cast<std::size_t>(rows) * hw);
    AlignedVector<T> dcol(k_ == 1 || !need_dx ? 0 : static_cast<std::size_t>(rows) * hw);
    for (int b = 0; b < x.n(); ++b) {
      const T* src = x.sample(b).data();
      if (k_ != 1) {
        detail::im2col(src, in_, x.h(), x.w(), k_, col.data());
        src = col.data();
      }
      ConstMapRM<T> dym(dy.sample(b).data(), out_, hw);
      gw.noalias() += dym * ConstMapRM<T>(src, rows, hw).transpose();
      for (int o = 0; o < out_; ++o) {
        const T* row = dy.sample(b).data() + static_cast<std::size_t>(o) * hw;
        bias_.grad[o] += std::accumulate(row, row + hw, T(0));
      }
      if (!need_dx) continue;
      if (k_ == 1) {
        MapRM<T>(dx.sample(b).data(), rows, hw).noalias() = wm.transpose() * dym;
      } else {
        MapRM<T>(dcol.data(), rows, hw).noalias() = wm.transpose() * dym;
        detail::col2im(dcol.data(), in_, x.h(), x.w(), k_, dx.sample(b).data());
      }
    }
    return dx;
  }

  void collect(std::vector<Param<T>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  int in_, out_, k_;
  Param<T> weight_;
  Param<T> bias_;
};

/// 2x2 stride-2 transposed convolution (learned upsampling).
template <typename T>
class UpConv2x2 : public Layer<T> {
 public:
  UpConv2x2(std::string name, int in, int out)
      : in_(in), out_(out),
        weight_(name + ".weight", {out, 2, 2, in}),
        bias_(name + ".bias", {out}) {}

  void init_he(std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / in_));
    for (auto& v : weight_.value) v = static_cast<T>(nd(rng));
  }

  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override {
    if (x.c() != in_) throw ShapeError(weight_.name + " channel mismatch " + x.shape().str());
    const int h = x.h(), w = x.w(), hw = h * w;
    Tensor<T> y(Shape4{x.n(), out_, 2 * h, 2 * w});
    ConstMapRM<T> wm(weight_.value.data(), out_ * 4, in_);
    MatrixRM<T> cols(out_ * 4, hw);
    for (int b = 0; b < x.n(); ++b) {
      cols.noalias() = wm * ConstMapRM<T>(x.sample(b).data(), in_, hw);
      for (int o = 0; o < out_; ++o) {
        for (int a = 0; a < 4; ++a) {
          const T* src = cols.row(o * 4 + a).data();
          const int oy = a / 2, ox = a % 2;
          for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
              y(b, o, 2 * i + oy, 2 * j + ox) = src[i * w + j] + bias_.value[o];
            }
          }
        }
      }
    }
    if (cache) cache->input = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                     bool need_dx) override {
    const Tensor<T>& x = cache.input;
    const int h = x.h(), w = x.w(), hw = h * w;
    ConstMapRM<T> wm(weight_.value.data(), out_ * 4, in_);
    MapRM<T> gw(weight_.grad.data(), out_ * 4, in_);
    Tensor<T> dx;
    if (need_dx) dx = Tensor<T>(x.shape());
    MatrixRM<T> cols(out_ * 4, hw);
    for (int b = 0; b < x.n(); ++b) {
      for (int o = 0; o < out_; ++o) {
        T bsum = T(0);
        for (int a = 0; a < 4; ++a) {
          T* dst = cols.row(o * 4 + a).data();
          const int oy = a / 2, ox = a % 2;
          for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
              dst[i * w + j] = dy(b, o, 2 * i + oy, 2 * j + ox);
              bsum += dst[i * w + j];
            }
          }
        }
        bias_.grad[o] += bsum;
      }
      ConstMapRM<T> xm(x.sample(b).data(), in_, hw);
      gw.noalias() += cols * xm.transpose();
      if (need_dx) {
        MapRM<T>(dx.sample(b).data(), in_, hw).noalias() = wm.transpose() * cols;
      }
    }
    return dx;
  }

  void collect(std::vector<Param<T>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  int in_, out_;
  Param<T> weight_;
  Param<T> bias_;
};

/// Group normalisation with per-channel affine parameters. Statistics are
/// computed per sample, so outputs never depend on other batch members.
template <typename T>
class GroupNorm : public Layer<T> {
 public:
  GroupNorm(std::string name, int channels, int groups, T eps = T(1e-5))
      : channels_(channels), groups_(groups), eps_(eps),
        gamma_(name + ".gamma", {channels}, T(1)),
        beta_(name + ".beta", {channels}, T(0)) {
    if (groups <= 0 || channels % groups != 0) {
      throw ConfigError(name + ": " + std::to_string(channels) +
                        " channels not divisible into " + std::to_string(groups) +
                        " groups");
    }
  }

  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override {
    const int per = channels_ / groups_;
    const std::size_t plane = x.shape().plane();
    const std::size_t m = per * plane;
    Tensor<T> y(x.shape());
    Tensor<T> xhat;
    if (cache) {
      xhat = Tensor<T>(x.shape());
      cache->stats.assign(static_cast<std::size_t>(x.n()) * groups_, T(0));
    }
    for (int b = 0; b < x.n(); ++b) {
      for (int g = 0; g < groups_; ++g) {
        const std::size_t off = x.index(b, g * per, 0, 0);
        const T* src = x.data() + off;
        double mean = 0.0;
        for (std::size_t i = 0; i < m; ++i) mean += src[i];
        mean /= double(m);
        double var = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double d = src[i] - mean;
          var += d * d;
        }
        var /= double(m);
        const T rstd = static_cast<T>(1.0 / std::sqrt(var + double(eps_)));
        const T mu = static_cast<T>(mean);
        if (cache) cache->stats[b * groups_ + g] = rstd;
        for (int c = 0; c < per; ++c) {
          const int ch = g * per + c;
          const T gm = gamma_.value[ch], bt = beta_.value[ch];
          for (std::size_t i = 0; i < plane; ++i) {
            const T xh = (src[c * plane + i] - mu) * rstd;
            if (cache) xhat[off + c * plane + i] = xh;
            y[off + c * plane + i] = gm * xh + bt;
          }
        }
      }
    }
    if (cache) cache->output = std::move(xhat);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                     bool /*need_dx*/) override {
    const Tensor<T>& xhat = cache.output;
    const int per = channels_ / groups_;
    const std::size_t plane = xhat.shape().plane();
    const double m = double(per * plane);
    Tensor<T> dx(xhat.shape());
    for (int b = 0; b < xhat.n(); ++b) {
      for (int g = 0; g < groups_; ++g) {
        const std::size_t off = xhat.index(b, g * per, 0, 0);
        double sum_d = 0.0, sum_dx = 0.0;
        for (int c = 0; c < per; ++c) {
          const int ch = g * per + c;
          double gsum = 0.0, bsum = 0.0;
          for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t k = off + c * plane + i;
            const double d = dy[k];
            gsum += d * xhat[k];
            bsum += d;
            const double dxh = d * gamma_.value[ch];
            sum_d += dxh;
            sum_dx += dxh * xhat[k];
          }
          gamma_.grad[ch] += static_cast<T>(gsum);
          beta_.grad[ch] += static_cast<T>(bsum);
        }
        const double mean_d = sum_d / m, mean_dx = sum_dx / m;
        const double rstd = cache.stats[b * groups_ + g];
        for (int c = 0; c < per; ++c) {
          const int ch = g * per + c;
          for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t k = off + c * plane + i;
            const double dxh = double(dy[k]) * gamma_.value[ch];
            dx[k] = static_cast<T>(rstd * (dxh - mean_d - double(xhat[k]) * mean_dx));
          }
        }
      }
    }
    return dx;
  }

  void collect(std::vector<Param<T>*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

 private:
  int channels_, groups_;
  T eps_;
  Param<T> gamma_;
  Param<T> beta_;
};

template <typename T>
class ReLU : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    if (cache) cache->output = y;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache, bool) override {
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) {
      dx[i] = cache.output[i] > T(0) ? dy[i] : T(0);
    }
    return dx;
  }
};

/// 2x2 max pooling, stride 2.
template <typename T>
class MaxPool2 : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override {
    if (x.h() % 2 || x.w() % 2) {
      throw ShapeError("max pooling needs even spatial size, got " + x.shape().str());
    }
    Tensor<T> y(Shape4{x.n(), x.c(), x.h() / 2, x.w() / 2});
    if (cache) {
      cache->index.assign(y.size(), 0);
      cache->input = Tensor<T>(Shape4{x.n(), x.c(), x.h(), x.w()});
    }
    std::size_t o = 0;
    for (int b = 0; b < x.n(); ++b) {
      for (int c = 0; c < x.c(); ++c) {
        for (int i = 0; i < y.h(); ++i) {
          for (int j = 0; j < y.w(); ++j, ++o) {
            std::size_t best = x.index(b, c, 2 * i, 2 * j);
            for (int a = 1; a < 4; ++a) {
              const std::size_t k = x.index(b, c, 2 * i + a / 2, 2 * j + a % 2);
              if (x[k] > x[best]) best = k;
            }
            y[o] = x[best];
            if (cache) cache->index[o] = static_cast<int>(best);
          }
        }
      }
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache, bool) override {
    Tensor<T> dx(cache.input.shape());
    for (std::size_t o = 0; o < dy.size(); ++o) dx[cache.index[o]] += dy[o];
    return dx;
  }
};

/// Bin-averaging to a fixed output grid, with the same bin edges as the
/// usual adaptive average pooling: [floor(i*H/G), ceil((i+1)*H/G)).
template <typename T>
class AdaptiveAvgPool : public Layer<T> {
 public:
  explicit AdaptiveAvgPool(int grid) : grid_(grid) {}

  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override {
    Tensor<T> y(Shape4{x.n(), x.c(), grid_, grid_});
    for (int b = 0; b < x.n(); ++b) {
      for (int c = 0; c < x.c(); ++c) {
        for (int i = 0; i < grid_; ++i) {
          const auto [y0, y1] = bin(i, x.h());
          for (int j = 0; j < grid_; ++j) {
            const auto [x0, x1] = bin(j, x.w());
            T acc = T(0);
            for (int yy = y0; yy < y1; ++yy) {
              for (int xx = x0; xx < x1; ++xx) acc += x(b, c, yy, xx);
            }
            y(b, c, i, j) = acc / T((y1 - y0) * (x1 - x0));
          }
        }
      }
    }
    if (cache) cache->input = Tensor<T>(x.shape());
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache, bool) override {
    Tensor<T> dx(cache.input.shape());
    for (int b = 0; b < dx.n(); ++b) {
      for (int c = 0; c < dx.c(); ++c) {
        for (int i = 0; i < grid_; ++i) {
          const auto [y0, y1] = bin(i, dx.h());
          for (int j = 0; j < grid_; ++j) {
            const auto [x0, x1] = bin(j, dx.w());
            const T g = dy(b, c, i, j) / T((y1 - y0) * (x1 - x0));
            for (int yy = y0; yy < y1; ++yy) {
              for (int xx = x0; xx < x1; ++xx) dx(b, c, yy, xx) += g;
            }
          }
        }
      }
    }
    return dx;
  }

 private:
  std::pair<int, int> bin(int i, int extent) const {
    return {(i * extent) / grid_, ((i + 1) * extent + grid_ - 1) / grid_};
  }
  int grid_;
};

/// Groups for GroupNorm: at most 8, always dividing `channels`.
inline int norm_groups(int channels) { return std::gcd(channels, 8); }

}  // namespace segpl::nn

#endif  // SEGPL_NN_LAYERS_HPP_
