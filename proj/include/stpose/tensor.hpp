// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stpose/error.hpp"

namespace stpose {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense row-major n-dimensional array. A rank-0 tensor (empty shape) is a
/// scalar holding one value. A default-constructed tensor is "null": it has no
/// storage and reports empty() == true.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(numel(shape_), fill), null_(false) {
    check_extents();
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)), null_(false) {
    check_extents();
    if (data_.size() != numel(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  static Tensor scalar(T v) { return Tensor(Shape{}, v); }

  bool empty() const { return null_; }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  template <typename... I>
  T& operator()(I... idx) {
    return data_[offset(idx...)];
  }
  template <typename... I>
  const T& operator()(I... idx) const {
    return data_[offset(idx...)];
  }

  T item() const {
    if (data_.size() != 1) {
      throw DimensionError("item() on tensor of shape " + shape_string(shape_));
    }
    return data_[0];
  }

  Tensor reshaped(Shape shape) const& {
    if (numel(shape) != data_.size()) {
      throw DimensionError("cannot reshape " + shape_string(shape_) + " to " +
                           shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }
  Tensor reshaped(Shape shape) && {
    if (numel(shape) != data_.size()) {
      throw DimensionError("cannot reshape " + shape_string(shape_) + " to " +
                           shape_string(shape));
    }
    return Tensor(std::move(shape), std::move(data_));
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.null_ == b.null_ && a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_extents() const {
    for (auto e : shape_) {
      if (e == 0) throw DimensionError("zero extent in shape " + shape_string(shape_));
    }
  }

  template <typename... I>
  std::size_t offset(I... idx) const {
    static_assert(sizeof...(I) > 0);
    const std::size_t ix[] = {static_cast<std::size_t>(idx)...};
    assert(sizeof...(I) == shape_.size());
    std::size_t off = 0;
    for (std::size_t a = 0; a < sizeof...(I); ++a) {
      assert(ix[a] < shape_[a]);
      off = off * shape_[a] + ix[a];
    }
    return off;
  }

  Shape shape_{0};
  std::vector<T> data_;
  bool null_ = true;
};

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff: " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

/// Axis permutation: out.shape[i] == in.shape[axes[i]].
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes);

/// Cyclic roll along one axis with torch.roll semantics: out[i] = x[i - shift].
template <typename T>
Tensor<T> roll(const Tensor<T>& x, std::size_t axis, std::ptrdiff_t shift);

std::vector<std::size_t> inverse_permutation(const std::vector<std::size_t>& axes);

}  // namespace stpose
