// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "stpose/autodiff.hpp"
#include "stpose/params.hpp"

namespace stpose {

// Standard deviation used for every weight matrix and positional table.
inline constexpr double kInitStd = 0.02;

/// x[..., in] * w[in, out] (+ b[out]).
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, const Var<T>* b = nullptr) {
  const Shape xs = x.shape();
  if (xs.empty() || w.value().rank() != 2 || xs.back() != w.shape()[0]) {
    throw DimensionError("linear: input " + shape_string(xs) + " with weight " +
                         shape_string(w.shape()));
  }
  const std::size_t in = xs.back();
  const std::size_t out = w.shape()[1];
  Var<T> flat = xs.size() == 2 ? x : ad::reshape(x, {x.value().size() / in, in});
  Var<T> y = ad::matmul(flat, w);
  if (b) y = ad::add_bias(y, *b);
  Shape ys = xs;
  ys.back() = out;
  return xs.size() == 2 ? y : ad::reshape(y, ys);
}

/// Two-layer perceptron with GELU: fc2(gelu(fc1(x))).
template <typename T>
Var<T> mlp(const Scope<T>& p, Var<T> x) {
  Var<T> b1 = p("fc1.b");
  Var<T> b2 = p("fc2.b");
  Var<T> h = ad::gelu(linear(x, p("fc1.w"), &b1));
  return linear(h, p("fc2.w"), &b2);
}

inline void declare_mlp(const ParamInit& init, std::size_t dim, std::size_t hidden) {
  ParamInit p = init;
  p.normal("fc1.w", {dim, hidden}, kInitStd);
  p.zeros("fc1.b", {hidden});
  p.normal("fc2.w", {hidden, dim}, kInitStd);
  p.zeros("fc2.b", {dim});
}

template <typename T>
Var<T> layer_norm(const Scope<T>& p, Var<T> x) {
  return ad::layer_norm(x, p("gamma"), p("beta"), T(1e-5));
}

inline void declare_layer_norm(const ParamInit& init, std::size_t dim) {
  ParamInit p = init;
  p.ones("gamma", {dim});
  p.zeros("beta", {dim});
}

/// Mean of squared differences over every entry.
template <typename T>
Var<T> mse_loss(Var<T> pred, Var<T> target) {
  Var<T> d = ad::sub(pred, target);
  return ad::mean(ad::mul(d, d));
}

}  // namespace stpose
