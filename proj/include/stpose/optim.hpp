// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>

#include "stpose/params.hpp"

namespace stpose {

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  ParamStore<T> m, v;
  std::uint64_t t = 0;  // completed updates

  /// Zero moments shaped like `params`.
  static AdamState zeros_like(const ParamStore<T>& params);

  friend bool operator==(const AdamState& a, const AdamState& b) {
    return a.t == b.t && a.m == b.m && a.v == b.v;
  }
};

/// Decoupled AdamW on one tensor at step t >= 1:
///   m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2
///   theta = theta (1 - lr wd) - lr mhat / (sqrt(vhat) + eps)
/// Arithmetic runs in double and rounds once to T.
template <typename T>
void adamw_step(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v, std::uint64_t t,
                double lr, double weight_decay, const AdamWHyper& hyper = {});

/// Updates every entry of `params`; a missing gradient counts as zero.
template <typename T>
void adamw_step(ParamStore<T>& params, const GradMap<T>& grads, AdamState<T>& state, double lr,
                double weight_decay, const AdamWHyper& hyper = {});

/// Linear warm-up to lr0 over e < w, then half-cosine decay to 0 at e = 1.
double lr_schedule(double epoch_fraction, double warmup_fraction, double lr0);

}  // namespace stpose
