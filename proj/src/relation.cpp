// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "stpose/relation.hpp"

namespace stpose {

void RelationConfig::validate() const {
  AttentionConfig{token_dim, heads}.validate();
  if (num_views < 1) throw ContractError("relation config: num_views must be positive");
  if (num_joints < 1) throw ContractError("relation config: num_joints must be positive");
  if (max_frames < 1 || mlp_ratio < 1) {
    throw ContractError("relation config: max_frames and mlp_ratio must be positive");
  }
}

template <typename T>
Var<T> encoder_layer(const Scope<T>& p, Var<T> x, std::size_t num_heads) {
  Var<T> a = multi_head_attention(layer_norm(p / "norm1", x), bind_mha(p / "attn"), num_heads);
  x = ad::add(x, a);
  return ad::add(x, mlp(p / "mlp", layer_norm(p / "norm2", x)));
}

template <typename T>
Var<T> encoder_stack(const Scope<T>& p, Var<T> x, std::size_t layers, std::size_t num_heads) {
  const Shape s = x.shape();
  if (s.size() != 3) throw DimensionError("encoder_stack: tokens " + shape_string(s));
  const std::size_t batch = s[0], n = s[1];
  Var<T> table = p("table");
  if (table.shape().size() != 2 || table.shape()[1] != s[2]) {
    throw DimensionError("encoder_stack: table " + shape_string(table.shape()) +
                         " for tokens " + shape_string(s));
  }
  if (n > table.shape()[0]) {
    throw ContractError("encoder_stack: sequence length " + std::to_string(n) +
                        " exceeds table rows " + std::to_string(table.shape()[0]));
  }
  std::vector<std::size_t> rows(batch * n);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i % n;
  x = ad::add(x, ad::reshape(ad::gather_rows(table, std::move(rows)), s));
  for (std::size_t l = 0; l < layers; ++l) {
    x = encoder_layer(p / ("layer" + std::to_string(l)), x, num_heads);
  }
  return layer_norm(p / "norm", x);
}

namespace {

template <typename T>
Var<T> as_batched(Var<T> x, const char* op) {
  if (x.value().rank() == 2) return ad::reshape(x, {1, x.shape()[0], x.shape()[1]});
  if (x.value().rank() != 3) throw DimensionError(std::string(op) + ": tokens " + shape_string(x.shape()));
  return x;
}

}  // namespace

template <typename T>
Var<T> temporal_encode(const Scope<T>& p, const RelationConfig& cfg, Var<T> tokens) {
  const Shape in = tokens.shape();
  Var<T> x = as_batched(tokens, "temporal_encode");
  if (x.shape()[1] > cfg.max_frames) {
    throw ContractError("temporal_encode: " + std::to_string(x.shape()[1]) +
                        " frames exceed max_frames " + std::to_string(cfg.max_frames));
  }
  x = encoder_stack(p, x, cfg.layers, cfg.heads);
  return ad::reshape(x, in);
}

template <typename T>
Var<T> view_encode(const Scope<T>& p, const RelationConfig& cfg, Var<T> tokens) {
  const Shape in = tokens.shape();
  Var<T> x = as_batched(tokens, "view_encode");
  if (x.shape()[1] != cfg.num_views) {
    throw ContractError("view_encode: got " + std::to_string(x.shape()[1]) + " view tokens, " +
                        "expected " + std::to_string(cfg.num_views));
  }
  x = encoder_stack(p, x, cfg.layers, cfg.heads);
  return ad::reshape(x, in);
}

template <typename T>
Var<T> regress_keypoints(const Scope<T>& p, const RelationConfig& cfg, Var<T> tokens) {
  const Shape s = tokens.shape();
  if (s.size() != 3) throw DimensionError("regress_keypoints: tokens " + shape_string(s));
  Var<T> b = p("b");
  Var<T> y = ad::sigmoid(linear(tokens, p("w"), &b));
  return ad::reshape(y, {s[0], s[1], cfg.num_joints, 2});
}

template <typename T>
Var<T> relation_forward(const Scope<T>& p, const RelationConfig& cfg, Var<T> tokens) {
  const Shape s = tokens.shape();
  if (s.size() != 3 || s[1] != cfg.num_views || s[2] != cfg.token_dim) {
    throw DimensionError("relation_forward: tokens " + shape_string(s));
  }
  // Temporal attention runs per view over frames, then view attention per frame.
  Var<T> x = ad::permute(tokens, {1, 0, 2});  // [V, f, D]
  x = temporal_encode(p / "temporal", cfg, x);
  x = ad::permute(x, {1, 0, 2});              // [f, V, D]
  x = view_encode(p / "view", cfg, x);
  return regress_keypoints(p / "head", cfg, x);
}

void declare_encoder_stack(const ParamInit& init, std::size_t dim, std::size_t rows,
                           std::size_t layers, std::size_t mlp_ratio) {
  ParamInit p = init;
  p.normal("table", {rows, dim}, kInitStd);
  for (std::size_t l = 0; l < layers; ++l) {
    const ParamInit layer = p / ("layer" + std::to_string(l));
    declare_layer_norm(layer / "norm1", dim);
    declare_mha(layer / "attn", dim);
    declare_layer_norm(layer / "norm2", dim);
    declare_mlp(layer / "mlp", dim, dim * mlp_ratio);
  }
  declare_layer_norm(p / "norm", dim);
}

void declare_regression_head(const ParamInit& init, std::size_t dim, std::size_t joints) {
  ParamInit p = init;
  p.normal("w", {dim, 2 * joints}, kInitStd);
  p.zeros("b", {2 * joints});
}

void declare_relation(const ParamInit& init, const RelationConfig& cfg) {
  cfg.validate();
  declare_encoder_stack(init / "temporal", cfg.token_dim, cfg.max_frames, cfg.layers, cfg.mlp_ratio);
  declare_encoder_stack(init / "view", cfg.token_dim, cfg.num_views, cfg.layers, cfg.mlp_ratio);
  declare_regression_head(init / "head", cfg.token_dim, cfg.num_joints);
}

#define STPOSE_INSTANTIATE_RELATION(T)                                                  \
  template Var<T> encoder_layer(const Scope<T>&, Var<T>, std::size_t);                  \
  template Var<T> encoder_stack(const Scope<T>&, Var<T>, std::size_t, std::size_t);     \
  template Var<T> temporal_encode(const Scope<T>&, const RelationConfig&, Var<T>);      \
  template Var<T> view_encode(const Scope<T>&, const RelationConfig&, Var<T>);          \
  template Var<T> regress_keypoints(const Scope<T>&, const RelationConfig&, Var<T>);    \
  template Var<T> relation_forward(const Scope<T>&, const RelationConfig&, Var<T>);

STPOSE_INSTANTIATE_RELATION(float)
STPOSE_INSTANTIATE_RELATION(double)

#undef STPOSE_INSTANTIATE_RELATION

}  // namespace stpose
