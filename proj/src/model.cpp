// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "stpose/model.hpp"

namespace stpose {

void ModelConfig::validate() const {
  spatial.validate();
  relation.validate();
  if (spatial.out_dim != relation.token_dim) {
    throw ContractError("model config: spatial out_dim " + std::to_string(spatial.out_dim) +
                        " differs from relation token_dim " +
                        std::to_string(relation.token_dim));
  }
}

ParamStore<double> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamInit init(seed);
  declare_spatial(init / "spatial", cfg.spatial);
  if (cfg.ablate_relations) {
    declare_regression_head(init / "relation" / "head", cfg.relation.token_dim,
                            cfg.relation.num_joints);
  } else {
    declare_relation(init / "relation", cfg.relation);
  }
  return init.store();
}

template <typename T>
Var<T> full_forward(const Scope<T>& root, const ModelConfig& cfg, const Tensor<float>& images,
                    ForwardTrace* trace) {
  const auto& s = images.shape();
  const SpatialConfig& sc = cfg.spatial;
  if (s.size() != 5 || s[1] != cfg.relation.num_views || s[2] != sc.image_h ||
      s[3] != sc.image_w || s[4] != sc.channels) {
    throw DimensionError("full_forward: images " + shape_string(s) + " do not match config");
  }
  const std::size_t frames = s[0], views = s[1];
  const std::size_t pixels = sc.image_h * sc.image_w * sc.channels;
  Tape<T>& tape = root.tape();
  const Scope<T> spatial = root / "spatial";

  if (trace) trace->images.assign(frames * views, {});
  std::vector<Var<T>> tokens;
  tokens.reserve(frames * views);
  for (std::size_t i = 0; i < frames * views; ++i) {
    std::vector<T> px(images.data().begin() + i * pixels, images.data().begin() + (i + 1) * pixels);
    Var<T> image = tape.constant(Tensor<T>({sc.image_h, sc.image_w, sc.channels}, std::move(px)));
    tokens.push_back(spatial_forward(spatial, sc, image, trace ? &trace->images[i] : nullptr));
  }
  Var<T> x = ad::reshape(ad::stack(tokens), {frames, views, sc.out_dim});
  if (trace) trace->frame_tokens = x.value().template cast<double>();

  const Scope<T> relation = root / "relation";
  if (cfg.ablate_relations) return regress_keypoints(relation / "head", cfg.relation, x);
  return relation_forward(relation, cfg.relation, x);
}

template <typename T>
Tensor<T> predict(const ModelConfig& cfg, const ParamStore<T>& params, const Tensor<float>& images) {
  Tape<T> tape;
  ParamBinder<T> binder(tape, params, /*requires_grad=*/false);
  return full_forward(Scope<T>(binder), cfg, images).value();
}

template Var<float> full_forward(const Scope<float>&, const ModelConfig&, const Tensor<float>&,
                                 ForwardTrace*);
template Var<double> full_forward(const Scope<double>&, const ModelConfig&, const Tensor<float>&,
                                  ForwardTrace*);
template Tensor<float> predict(const ModelConfig&, const ParamStore<float>&, const Tensor<float>&);
template Tensor<double> predict(const ModelConfig&, const ParamStore<double>&, const Tensor<float>&);

}  // namespace stpose
