// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <vector>

#include "stpose/autodiff.hpp"
#include "stpose/layers.hpp"
#include "stpose/params.hpp"

namespace stpose {

// Additive logit for masked attention pairs.
inline constexpr double kMaskValue = -1e9;

struct AttentionConfig {
  std::size_t embed_dim = 0;
  std::size_t num_heads = 1;

  std::size_t head_dim() const { return num_heads ? embed_dim / num_heads : 0; }
  void validate() const;
};

/// Window geometry over a token grid. Extents must be multiples of the window.
struct WindowSpec {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t window = 1;
  std::size_t shift = 0;

  void validate() const;
  std::size_t num_windows() const { return (grid_h / window) * (grid_w / window); }
  std::size_t window_tokens() const { return window * window; }
};

/// Softmax(Q K^T / sqrt(d) + mask) V for q, k, v of shape [n, d] or [B, n, d].
/// `mask` (optional) has shape [B, n, n] (or [n, n]) with entries 0 or
/// kMaskValue. If `weights` is non-null it receives the post-softmax matrix.
template <typename T>
Var<T> scaled_dot_attention(Var<T> q, Var<T> k, Var<T> v, const Tensor<T>* mask = nullptr,
                            Tensor<T>* weights = nullptr);

/// Fused projections: qkv [C, 3C] laid out as [Q | K | V] with heads
/// contiguous inside each block; out [C, C].
template <typename T>
struct MhaWeights {
  Var<T> qkv;
  Var<T> out;
};

template <typename T>
MhaWeights<T> bind_mha(const Scope<T>& p) {
  return {p("qkv.w"), p("proj.w")};
}

void declare_mha(const ParamInit& init, std::size_t dim);

/// Concat(head_1..head_h) W_out over z of shape [n, C] or [B, n, C]. The mask
/// is per batch entry and shared across heads; `weights` receives
/// [B, h, n, n].
template <typename T>
Var<T> multi_head_attention(Var<T> z, const MhaWeights<T>& w, std::size_t num_heads,
                            const Tensor<T>* mask = nullptr, Tensor<T>* weights = nullptr);

// Lossless [H, W, C] <-> [num_windows, M*M, C] rearrangement, row-major over
// windows and over tokens inside a window.
template <typename T>
Tensor<T> window_partition(const Tensor<T>& grid, const WindowSpec& spec);
template <typename T>
Tensor<T> window_reverse(const Tensor<T>& windows, const WindowSpec& spec);
template <typename T>
Var<T> window_partition(Var<T> grid, const WindowSpec& spec);
template <typename T>
Var<T> window_reverse(Var<T> windows, const WindowSpec& spec);

/// Rolls a [H, W, C] grid by `shift` along both spatial axes.
template <typename T>
Tensor<T> cyclic_shift(const Tensor<T>& grid, std::ptrdiff_t shift);
template <typename T>
Var<T> cyclic_shift(Var<T> grid, std::ptrdiff_t shift);

/// Region id (0..8) of every position of the shifted grid, [grid_h * grid_w]
/// row-major. Positions that wrapped around in the cyclic shift get distinct ids.
std::vector<int> shift_region_labels(const WindowSpec& spec);

/// Additive mask [num_windows, M*M, M*M] separating tokens of different
/// pre-shift regions. Requires shift == floor(M/2) > 0.
Tensor<double> shifted_mask(const WindowSpec& spec);

/// Everything needed to run one windowed attention over an arbitrary grid:
/// the grid is zero-padded up to multiples of the window, optionally shifted,
/// and partitioned.
struct WindowLayout {
  std::size_t grid_h = 0;  // unpadded
  std::size_t grid_w = 0;
  WindowSpec spec;         // padded extents
  // Original token index for each (window, slot); kZeroRow for padding.
  std::vector<std::size_t> origin;
  // [num_windows, M*M, M*M]; null when no pair needs masking.
  Tensor<double> mask;

  bool padded() const { return spec.grid_h != grid_h || spec.grid_w != grid_w; }
};

/// Shift is floor(M/2) when `shifted` and the padded grid holds more than one
/// window; otherwise 0.
WindowLayout make_window_layout(std::size_t grid_h, std::size_t grid_w, std::size_t window,
                                bool shifted);

/// Windowed multi-head self-attention over tokens x [grid_h * grid_w, C].
/// When `received` is non-null it is filled with the mean post-softmax weight
/// each token receives from the real queries of its window, averaged over heads.
template <typename T>
Var<T> window_attention(Var<T> x, const WindowLayout& layout, const MhaWeights<T>& w,
                        std::size_t num_heads, std::vector<double>* received = nullptr);

/// Pre-norm transformer block with windowed attention:
///   x' = WA(LN(x)) + x;  y = MLP(LN(x')) + x'
template <typename T>
Var<T> window_block(const Scope<T>& p, Var<T> x, const WindowLayout& layout,
                    std::size_t num_heads, std::vector<double>* received = nullptr);

/// Two consecutive blocks: regular windows (scope "wmsa"), then shifted
/// windows (scope "swmsa").
template <typename T>
Var<T> swmsa_block_pair(const Scope<T>& p, Var<T> x, std::size_t grid_h, std::size_t grid_w,
                        std::size_t window, std::size_t num_heads,
                        std::vector<double>* received = nullptr);

void declare_window_block(const ParamInit& init, std::size_t dim, std::size_t mlp_ratio);
void declare_swmsa_block_pair(const ParamInit& init, std::size_t dim, std::size_t mlp_ratio);

}  // namespace stpose
