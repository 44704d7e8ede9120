// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "stpose/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stpose {

namespace {

constexpr double kPosEmbedStd = 0.2;

}  // namespace

void SpatialConfig::validate() const {
  if (image_h == 0 || image_w == 0 || channels == 0 || patch == 0) {
    throw ContractError("spatial config: image extents, channels and patch must be positive");
  }
  if (image_h % patch != 0 || image_w % patch != 0) {
    throw ContractError("spatial config: image " + std::to_string(image_h) + "x" +
                        std::to_string(image_w) + " not divisible by patch " +
                        std::to_string(patch));
  }
  const std::size_t stages = stage_depths.size();
  if (stages == 0 || stage_dims.size() != stages || stage_heads.size() != stages) {
    throw ContractError("spatial config: stage_depths, stage_dims and stage_heads must have "
                        "the same non-zero length");
  }
  std::size_t gh = grid_h(), gw = grid_w();
  for (std::size_t s = 0; s < stages; ++s) {
    if (stage_depths[s] == 0) throw ContractError("spatial config: empty stage");
    AttentionConfig{stage_dims[s], stage_heads[s]}.validate();
    if (s > 0) {
      if (stage_dims[s] != 2 * stage_dims[s - 1]) {
        throw ContractError("spatial config: stage_dims must double at every merge");
      }
      if (gh % 2 != 0 || gw % 2 != 0) {
        throw ContractError("spatial config: odd grid " + std::to_string(gh) + "x" +
                            std::to_string(gw) + " cannot be merged");
      }
      gh /= 2;
      gw /= 2;
    }
  }
  if (window == 0 || mlp_ratio == 0 || out_dim == 0) {
    throw ContractError("spatial config: window, mlp_ratio and out_dim must be positive");
  }
  if (!(prune_keep_ratio > 0.0 && prune_keep_ratio <= 1.0)) {
    throw ContractError("spatial config: prune_keep_ratio must lie in (0, 1]");
  }
}

template <typename T>
Var<T> patch_embed(Var<T> image, std::size_t patch, Var<T> w, Var<T> b) {
  const Shape s = image.shape();
  if (s.size() != 3) throw DimensionError("patch_embed: image " + shape_string(s));
  if (patch == 0 || s[0] % patch != 0 || s[1] % patch != 0) {
    throw ContractError("patch_embed: image " + shape_string(s) + " not divisible by patch " +
                        std::to_string(patch));
  }
  const std::size_t gh = s[0] / patch, gw = s[1] / patch, ch = s[2];
  Var<T> x = ad::reshape(image, {gh, patch, gw, patch, ch});
  x = ad::permute(x, {0, 2, 1, 3, 4});
  x = ad::reshape(x, {gh * gw, patch * patch * ch});
  return linear(x, w, &b);
}

template <typename T>
Var<T> patch_merge(Var<T> tokens, std::size_t grid_h, std::size_t grid_w, Var<T> w) {
  const Shape s = tokens.shape();
  if (s.size() != 2 || s[0] != grid_h * grid_w) {
    throw DimensionError("patch_merge: tokens " + shape_string(s) + " for grid " +
                         std::to_string(grid_h) + "x" + std::to_string(grid_w));
  }
  if (grid_h % 2 != 0 || grid_w % 2 != 0) {
    throw ContractError("patch_merge: odd grid " + std::to_string(grid_h) + "x" +
                        std::to_string(grid_w));
  }
  const std::size_t c = s[1];
  // Neighbourhood order: (0,0), (1,0), (0,1), (1,1) as (row, col) offsets.
  Var<T> x = ad::reshape(tokens, {grid_h / 2, 2, grid_w / 2, 2, c});
  x = ad::permute(x, {0, 2, 3, 1, 4});
  x = ad::reshape(x, {(grid_h / 2) * (grid_w / 2), 4 * c});
  return linear(x, w);
}

std::vector<std::size_t> select_patches(std::span<const double> scores, double keep_ratio) {
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) {
    throw ContractError("patch_prune: keep ratio must lie in (0, 1]");
  }
  const std::size_t n = scores.size();
  if (n == 0) throw ContractError("patch_prune: no tokens");
  // The tolerance keeps exact products such as 0.3 * 10 from rounding up.
  auto keep = static_cast<std::size_t>(std::ceil(keep_ratio * static_cast<double>(n) - 1e-9));
  keep = std::clamp<std::size_t>(keep, 1, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

template <typename T>
std::pair<Var<T>, std::vector<std::size_t>> patch_prune(Var<T> tokens,
                                                        std::span<const double> scores,
                                                        double keep_ratio) {
  if (tokens.value().rank() != 2 || tokens.shape()[0] != scores.size()) {
    throw DimensionError("patch_prune: tokens " + shape_string(tokens.shape()) + " with " +
                         std::to_string(scores.size()) + " scores");
  }
  auto kept = select_patches(scores, keep_ratio);
  if (kept.size() == scores.size()) return {tokens, std::move(kept)};
  return {ad::gather_rows(tokens, kept), kept};
}

template <typename T>
Var<T> spatial_forward(const Scope<T>& p, const SpatialConfig& cfg, Var<T> image,
                       SpatialTrace* trace) {
  const Shape want{cfg.image_h, cfg.image_w, cfg.channels};
  if (image.shape() != want) {
    throw DimensionError("spatial_forward: image " + shape_string(image.shape()) +
                         ", expected " + shape_string(want));
  }
  Var<T> tokens = patch_embed(image, cfg.patch, p("patch_embed.w"), p("patch_embed.b"));
  if (cfg.patch_pos_embed) tokens = ad::add(tokens, p("pos_embed"));

  const bool prune = cfg.prune_keep_ratio < 1.0;
  std::vector<double> scores;
  std::size_t gh = cfg.grid_h(), gw = cfg.grid_w();
  const std::size_t stages = cfg.stage_depths.size();
  if (trace) trace->stage_tokens.clear();
  for (std::size_t s = 0; s < stages; ++s) {
    if (s > 0) {
      tokens = patch_merge(tokens, gh, gw, (p / ("merge" + std::to_string(s)))("w"));
      gh /= 2;
      gw /= 2;
    }
    if (trace) trace->stage_tokens.push_back(tokens.shape()[0]);
    const Scope<T> stage = p / ("stage" + std::to_string(s));
    for (std::size_t d = 0; d < cfg.stage_depths[s]; ++d) {
      const bool last = s + 1 == stages && d + 1 == cfg.stage_depths[s];
      tokens = swmsa_block_pair(stage / ("pair" + std::to_string(d)), tokens, gh, gw, cfg.window,
                                cfg.stage_heads[s], last && (prune || trace) ? &scores : nullptr);
    }
  }

  std::vector<std::size_t> kept;
  if (prune) {
    std::tie(tokens, kept) = patch_prune(tokens, std::span<const double>(scores),
                                         cfg.prune_keep_ratio);
  } else if (trace) {
    kept.resize(tokens.shape()[0]);
    std::iota(kept.begin(), kept.end(), 0);
  }
  if (trace) {
    trace->scores = std::move(scores);
    trace->kept = std::move(kept);
  }

  Var<T> pooled = ad::mean_rows(tokens);
  Var<T> b = p("head.b");
  return linear(pooled, p("head.w"), &b);
}

void declare_spatial(const ParamInit& init, const SpatialConfig& cfg) {
  cfg.validate();
  ParamInit p = init;
  const std::size_t patch_in = cfg.patch * cfg.patch * cfg.channels;
  p.normal("patch_embed.w", {patch_in, cfg.stage_dims[0]}, kInitStd);
  p.zeros("patch_embed.b", {cfg.stage_dims[0]});
  if (cfg.patch_pos_embed) {
    p.normal("pos_embed", {cfg.grid_h() * cfg.grid_w(), cfg.stage_dims[0]}, kPosEmbedStd);
  }
  for (std::size_t s = 0; s < cfg.stage_depths.size(); ++s) {
    if (s > 0) {
      (p / ("merge" + std::to_string(s))).normal("w", {4 * cfg.stage_dims[s - 1], cfg.stage_dims[s]},
                                                 kInitStd);
    }
    const ParamInit stage = p / ("stage" + std::to_string(s));
    for (std::size_t d = 0; d < cfg.stage_depths[s]; ++d) {
      declare_swmsa_block_pair(stage / ("pair" + std::to_string(d)), cfg.stage_dims[s], cfg.mlp_ratio);
    }
  }
  p.normal("head.w", {cfg.stage_dims.back(), cfg.out_dim}, kInitStd);
  p.zeros("head.b", {cfg.out_dim});
}

#define STPOSE_INSTANTIATE_SPATIAL(T)                                                      \
  template Var<T> patch_embed(Var<T>, std::size_t, Var<T>, Var<T>);                        \
  template Var<T> patch_merge(Var<T>, std::size_t, std::size_t, Var<T>);                   \
  template std::pair<Var<T>, std::vector<std::size_t>> patch_prune(                        \
      Var<T>, std::span<const double>, double);                                            \
  template Var<T> spatial_forward(const Scope<T>&, const SpatialConfig&, Var<T>, SpatialTrace*);

STPOSE_INSTANTIATE_SPATIAL(float)
STPOSE_INSTANTIATE_SPATIAL(double)

#undef STPOSE_INSTANTIATE_SPATIAL

}  // namespace stpose
