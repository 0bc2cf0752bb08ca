// Copyright 2026 The Fusion4CA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fusion4ca {

/// Dense NCHW shape. Every activation in the library is rank 4; scalars are
/// [1,1,1,1] and point sets are [1,F,N,1].
using Shape = std::array<int, 4>;

inline std::size_t numel(const Shape& s) {
  return static_cast<std::size_t>(s[0]) * s[1] * s[2] * s[3];
}

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[' << s[0] << ',' << s[1] << ',' << s[2] << ',' << s[3] << ']';
  return os.str();
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Storage aligned for Eigen's vector paths, so reductions do not depend on
/// where the allocator placed the buffer.
template <class T>
using AlignedBuffer = std::vector<T, Eigen::aligned_allocator<T>>;

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(numel(shape), fill) {
    for (int d : shape) {
      if (d < 0) throw ShapeError("negative tensor dimension in " + to_string(shape));
    }
  }
  Tensor(Shape shape, const std::vector<T>& data) : Tensor(shape, AlignedBuffer<T>(data.begin(), data.end())) {}
  Tensor(Shape shape, AlignedBuffer<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != numel(shape_)) {
      throw ShapeError("tensor data size does not match shape " + to_string(shape_));
    }
  }

  static Tensor scalar(T v) { return Tensor({1, 1, 1, 1}, v); }

  const Shape& shape() const { return shape_; }
  int n() const { return shape_[0]; }
  int c() const { return shape_[1]; }
  int h() const { return shape_[2]; }
  int w() const { return shape_[3]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  std::size_t offset(int b, int ch, int y, int x) const {
    return ((static_cast<std::size_t>(b) * shape_[1] + ch) * shape_[2] + y) * shape_[3] + x;
  }
  T& operator()(int b, int ch, int y, int x) { return data_[offset(b, ch, y, x)]; }
  const T& operator()(int b, int ch, int y, int x) const { return data_[offset(b, ch, y, x)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T item() const {
    if (data_.size() != 1) throw ShapeError("item() on non-scalar tensor " + to_string(shape_));
    return data_[0];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape s) const {
    if (numel(s) != data_.size()) throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(s));
    return Tensor(s, data_);
  }

  template <class U>
  Tensor<U> cast() const {
    AlignedBuffer<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  T sum() const {
    T s = 0;
    for (T v : data_) s += v;
    return s;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_{0, 0, 0, 0};
  AlignedBuffer<T> data_;
};

/// A rank-4 activation [batch, channels, height, width].
template <class T>
using FeatureMap = Tensor<T>;

inline void require_shape(const Shape& got, const Shape& want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": expected " + to_string(want) + ", got " + to_string(got));
  }
}

}  // namespace fusion4ca
