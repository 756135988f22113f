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

#ifndef SEGPL_TENSOR_HPP_
#define SEGPL_TENSOR_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <new>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "segpl/error.hpp"

namespace segpl {

/// Allocator returning 64-byte aligned blocks. Eigen picks its vectorised
/// peel from the buffer address, so a fixed alignment keeps summation order,
/// and hence results, identical from one allocation to the next.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Shape of a dense NCHW array.
struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t sample() const { return static_cast<std::size_t>(c) * h * w; }

  friend bool operator==(const Shape4&, const Shape4&) = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << ", " << c << ", " << h << ", " << w << ")";
    return os.str();
  }
};

/// Dense rank-4 array in NCHW order with value semantics.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape4 shape, T fill = T(0))
      : shape_(shape), data_(shape.size(), fill) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
      throw ShapeError("negative extent in " + shape.str());
    }
  }
  explicit Tensor(int n, int c, int h, int w, T fill = T(0))
      : Tensor(Shape4{n, c, h, w}, fill) {}

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  AlignedVector<T>& storage() { return data_; }
  const AlignedVector<T>& storage() const { return data_; }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& operator()(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  const T& operator()(int n, int c, int y, int x) const {
    return data_[index(n, c, y, x)];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> sample(int n) {
    return {data_.data() + n * shape_.sample(), shape_.sample()};
  }
  std::span<const T> sample(int n) const {
    return {data_.data() + n * shape_.sample(), shape_.sample()};
  }
  std::span<T> plane(int n, int c) {
    return {data_.data() + index(n, c, 0, 0), shape_.plane()};
  }
  std::span<const T> plane(int n, int c) const {
    return {data_.data() + index(n, c, 0, 0), shape_.plane()};
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](T v) { return std::isfinite(v); });
  }

  /// Copies samples [first, first + count) into a new tensor.
  Tensor slice(int first, int count) const {
    if (first < 0 || count < 0 || first + count > shape_.n) {
      throw ShapeError("slice [" + std::to_string(first) + ", +" +
                       std::to_string(count) + ") out of range for " + shape_.str());
    }
    Tensor out(Shape4{count, shape_.c, shape_.h, shape_.w});
    std::copy_n(data_.begin() + first * shape_.sample(), count * shape_.sample(),
                out.data_.begin());
    return out;
  }

  /// Gathers the listed samples (repeats allowed) into a new tensor.
  Tensor gather(std::span<const int> ids) const {
    Tensor out(Shape4{static_cast<int>(ids.size()), shape_.c, shape_.h, shape_.w});
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto src = sample(ids[i]);
      std::copy(src.begin(), src.end(), out.data_.begin() + i * shape_.sample());
    }
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape4 shape_{};
  AlignedVector<T> data_;
};

/// Stacks tensors with equal C, H, W along the batch axis.
template <typename T>
Tensor<T> concat_batch(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.c() != b.c() || a.h() != b.h() || a.w() != b.w()) {
    throw ShapeError("cannot stack " + a.shape().str() + " and " + b.shape().str());
  }
  Tensor<T> out(Shape4{a.n() + b.n(), a.c(), a.h(), a.w()});
  std::copy(a.storage().begin(), a.storage().end(), out.data());
  std::copy(b.storage().begin(), b.storage().end(), out.data() + a.size());
  return out;
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace segpl

#endif  // SEGPL_TENSOR_HPP_
