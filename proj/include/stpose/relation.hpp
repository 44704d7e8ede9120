// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>

#include "stpose/attention.hpp"

namespace stpose {

/// Frame-token relation encoders (temporal, then across views) and the
/// keypoint regression head.
struct RelationConfig {
  std::size_t token_dim = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t num_views = 4;
  std::size_t num_joints = 17;
  std::size_t max_frames = 128;
  std::size_t mlp_ratio = 4;

  void validate() const;
};

/// One pre-norm global-attention layer over x [B, n, D]:
///   x' = MSA(LN(x)) + x;  y = MLP(LN(x')) + x'
template <typename T>
Var<T> encoder_layer(const Scope<T>& p, Var<T> x, std::size_t num_heads);

/// Adds rows 0..n-1 of the scope's "table" to every batch entry of x [B, n, D],
/// runs `layers` encoder layers and a final LayerNorm.
template <typename T>
Var<T> encoder_stack(const Scope<T>& p, Var<T> x, std::size_t layers, std::size_t num_heads);

/// tokens [f, D] or [B, f, D] (one batch entry per view).
template <typename T>
Var<T> temporal_encode(const Scope<T>& p, const RelationConfig& cfg, Var<T> tokens);

/// tokens [V, D] or [B, V, D] (one batch entry per frame), views in camera order.
template <typename T>
Var<T> view_encode(const Scope<T>& p, const RelationConfig& cfg, Var<T> tokens);

/// tokens [f, V, D] -> normalized coordinates [f, V, J, 2] in (0, 1).
template <typename T>
Var<T> regress_keypoints(const Scope<T>& p, const RelationConfig& cfg, Var<T> tokens);

/// frame tokens [f, V, D] -> poses [f, V, J, 2].
template <typename T>
Var<T> relation_forward(const Scope<T>& p, const RelationConfig& cfg, Var<T> tokens);

void declare_encoder_stack(const ParamInit& init, std::size_t dim, std::size_t rows,
                           std::size_t layers, std::size_t mlp_ratio);
void declare_regression_head(const ParamInit& init, std::size_t dim, std::size_t joints);
void declare_relation(const ParamInit& init, const RelationConfig& cfg);

}  // namespace stpose
