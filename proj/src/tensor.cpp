// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "stpose/tensor.hpp"

namespace stpose {

std::vector<std::size_t> inverse_permutation(const std::vector<std::size_t>& axes) {
  std::vector<std::size_t> inv(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) inv.at(axes[i]) = i;
  return inv;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  const std::size_t r = x.rank();
  if (axes.size() != r) {
    throw DimensionError("permute: " + std::to_string(axes.size()) +
                         " axes for tensor " + shape_string(x.shape()));
  }
  std::vector<bool> seen(r, false);
  for (auto a : axes) {
    if (a >= r || seen[a]) throw ContractError("permute: invalid axis list");
    seen[a] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.dim(axes[i]);

  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * x.dim(i);
  // Stride in the input for a unit step along each output axis.
  std::vector<std::size_t> step(r);
  for (std::size_t i = 0; i < r; ++i) step[i] = in_stride[axes[i]];

  Tensor<T> out(out_shape);
  if (r == 0) {
    out[0] = x[0];
    return out;
  }
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  const std::size_t inner = out_shape[r - 1];
  const std::size_t inner_step = step[r - 1];
  auto in = x.data();
  auto o = out.data();
  for (std::size_t dst = 0; dst < out.size(); dst += inner) {
    for (std::size_t k = 0; k < inner; ++k) o[dst + k] = in[src + k * inner_step];
    // Advance the multi-index over all but the innermost axis.
    for (std::size_t a = r - 1; a-- > 0;) {
      src += step[a];
      if (++idx[a] < out_shape[a]) break;
      src -= step[a] * out_shape[a];
      idx[a] = 0;
    }
  }
  return out;
}

template <typename T>
Tensor<T> roll(const Tensor<T>& x, std::size_t axis, std::ptrdiff_t shift) {
  if (axis >= x.rank()) {
    throw DimensionError("roll: axis " + std::to_string(axis) + " out of range for " +
                         shape_string(x.shape()));
  }
  const auto n = static_cast<std::ptrdiff_t>(x.dim(axis));
  const std::size_t s = static_cast<std::size_t>(((shift % n) + n) % n);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis);

  Tensor<T> out(x.shape());
  auto in = x.data();
  auto o = out.data();
  for (std::size_t b = 0; b < outer; ++b) {
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t j = (i + s) % len;
      std::copy_n(in.begin() + (b * len + i) * inner, inner, o.begin() + (b * len + j) * inner);
    }
  }
  return out;
}

template Tensor<float> permute(const Tensor<float>&, const std::vector<std::size_t>&);
template Tensor<double> permute(const Tensor<double>&, const std::vector<std::size_t>&);
template Tensor<int> permute(const Tensor<int>&, const std::vector<std::size_t>&);
template Tensor<float> roll(const Tensor<float>&, std::size_t, std::ptrdiff_t);
template Tensor<double> roll(const Tensor<double>&, std::size_t, std::ptrdiff_t);
template Tensor<int> roll(const Tensor<int>&, std::size_t, std::ptrdiff_t);

}  // namespace stpose
