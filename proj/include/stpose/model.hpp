// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <vector>

#include "stpose/relation.hpp"
#include "stpose/spatial.hpp"

namespace stpose {

struct ModelConfig {
  SpatialConfig spatial;
  RelationConfig relation;
  // Spatial-only baseline: frame tokens go straight to the regression head.
  bool ablate_relations = false;

  void validate() const;
};

ParamStore<double> init_params(const ModelConfig& cfg, std::uint64_t seed);

struct ForwardTrace {
  std::vector<SpatialTrace> images;  // frame-major, f * V entries
  Tensor<double> frame_tokens;       // [f, V, D]
};

/// images [f, V, H, W, C] -> predicted normalized keypoints [f, V, J, 2].
/// Spatial weights are shared across every frame and view.
template <typename T>
Var<T> full_forward(const Scope<T>& root, const ModelConfig& cfg, const Tensor<float>& images,
                    ForwardTrace* trace = nullptr);

/// Forward pass without gradient bookkeeping.
template <typename T>
Tensor<T> predict(const ModelConfig& cfg, const ParamStore<T>& params, const Tensor<float>& images);

}  // namespace stpose
