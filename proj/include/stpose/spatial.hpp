// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "stpose/attention.hpp"

namespace stpose {

/// Hierarchical windowed-attention image encoder settings.
struct SpatialConfig {
  std::size_t image_h = 64;
  std::size_t image_w = 64;
  std::size_t channels = 3;
  std::size_t patch = 4;
  std::vector<std::size_t> stage_depths{2, 2};  // block pairs per stage
  std::vector<std::size_t> stage_dims{32, 64};  // doubles at every merge
  std::vector<std::size_t> stage_heads{2, 4};
  std::size_t window = 4;
  std::size_t mlp_ratio = 4;
  double prune_keep_ratio = 1.0;
  std::size_t out_dim = 64;
  // Learned absolute table added to the patch tokens.
  bool patch_pos_embed = true;

  void validate() const;
  std::size_t grid_h() const { return image_h / patch; }
  std::size_t grid_w() const { return image_w / patch; }
};

/// Non-overlapping p x p patches of image [H, W, ch], flattened in (row, col,
/// channel) order and projected: w [p*p*ch, dim], b [dim]. Returns [N, dim]
/// with N = (H/p)(W/p), tokens row-major over the patch grid.
template <typename T>
Var<T> patch_embed(Var<T> image, std::size_t patch, Var<T> w, Var<T> b);

/// Concatenates each 2x2 neighbourhood of tokens [gh * gw, C] to 4C and
/// projects with w [4C, 2C]. Returns [(gh/2)(gw/2), 2C].
template <typename T>
Var<T> patch_merge(Var<T> tokens, std::size_t grid_h, std::size_t grid_w, Var<T> w);

/// Indices of the ceil(keep_ratio * N) highest scores, ascending. Ties go to
/// the lower index.
std::vector<std::size_t> select_patches(std::span<const double> scores, double keep_ratio);

/// Keeps the selected rows of tokens [N, C].
template <typename T>
std::pair<Var<T>, std::vector<std::size_t>> patch_prune(Var<T> tokens,
                                                        std::span<const double> scores,
                                                        double keep_ratio);

/// Intermediate quantities of one spatial_forward call.
struct SpatialTrace {
  std::vector<std::size_t> stage_tokens;  // token count entering each stage
  std::vector<double> scores;             // attention received, final stage
  std::vector<std::size_t> kept;          // indices pooled into the frame token
};

/// image [H, W, ch] -> frame token [out_dim].
template <typename T>
Var<T> spatial_forward(const Scope<T>& p, const SpatialConfig& cfg, Var<T> image,
                       SpatialTrace* trace = nullptr);

void declare_spatial(const ParamInit& init, const SpatialConfig& cfg);

}  // namespace stpose
