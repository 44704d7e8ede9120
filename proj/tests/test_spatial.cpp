// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include "stpose/error.hpp"
#include "stpose/gradcheck.hpp"
#include "stpose/spatial.hpp"
#include "test_util.hpp"

namespace stpose {
namespace {

using testing::normal_tensor;
using testing::random_tensor;

SpatialConfig micro_config() {
  SpatialConfig c;
  c.image_h = c.image_w = 32;
  c.patch = 4;
  c.window = 4;
  c.stage_depths = {1, 1};
  c.stage_dims = {16, 32};
  c.stage_heads = {2, 2};
  c.out_dim = 32;
  return c;
}

// Initial values jittered so that no gradient is trivially zero.
ParamStore<double> spatial_params(const SpatialConfig& cfg, std::uint64_t seed, double jitter = 0.0) {
  ParamInit init(seed);
  declare_spatial(init / "spatial", cfg);
  ParamStore<double> p = init.store();
  if (jitter > 0.0) {
    std::uint64_t k = 0;
    for (auto& [name, v] : p.entries()) {
      const Tensor<double> n = normal_tensor(v.shape(), seed * 7919 + k++, jitter);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += n[i];
    }
  }
  return p;
}

template <typename T>
Tensor<T> frame_token(const SpatialConfig& cfg, const ParamStore<T>& p, const Tensor<T>& image,
                      SpatialTrace* trace = nullptr) {
  Tape<T> t;
  ParamBinder<T> b(t, p, false);
  return spatial_forward(Scope<T>(b) / "spatial", cfg, t.constant(image), trace).value();
}

// ---------------------------------------------------------------------------
// patch_embed

TEST(PatchEmbed, TokenCounts) {
  Tape<float> t;
  const Var<float> image = t.constant(Tensor<float>({224, 224, 3}, 0.5f));
  const Var<float> w16 = t.constant(Tensor<float>({16 * 16 * 3, 768}, 0.01f));
  EXPECT_EQ(patch_embed(image, 16, w16, t.constant(Tensor<float>({768}))).shape(), (Shape{196, 768}));
  const Var<float> w4 = t.constant(Tensor<float>({4 * 4 * 3, 96}, 0.01f));
  EXPECT_EQ(patch_embed(image, 4, w4, t.constant(Tensor<float>({96}))).shape(), (Shape{3136, 96}));
}

TEST(PatchEmbed, ZeroImageAndBiasGiveZeroTokens) {
  Tape<double> t;
  const Tensor<double> out = patch_embed(t.constant(Tensor<double>({16, 16, 3})), 4,
                                         t.constant(random_tensor({48, 8}, 1)), t.constant(Tensor<double>({8})))
                                 .value();
  EXPECT_EQ(out, Tensor<double>({16, 8}));
}

TEST(PatchEmbed, FlattensPatchesRowMajor) {
  Tape<double> t;
  const Tensor<double> img = random_tensor({8, 8, 3}, 2);
  const Tensor<double> w = random_tensor({48, 5}, 3), b = random_tensor({5}, 4);
  const Tensor<double> out = patch_embed(t.constant(img), 4, t.constant(w), t.constant(b)).value();
  // token 1 is the patch at grid (0, 1)
  for (std::size_t o = 0; o < 5; ++o) {
    double s = b[o];
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t ch = 0; ch < 3; ++ch) s += img(r, 4 + c, ch) * w((r * 4 + c) * 3 + ch, o);
    EXPECT_NEAR(out(1, o), s, 1e-12);
  }
}

TEST(PatchEmbed, NonDivisibleImageIsContractError) {
  Tape<double> t;
  EXPECT_THROW(patch_embed(t.constant(Tensor<double>({10, 8, 3})), 4, t.constant(Tensor<double>({48, 4})),
                           t.constant(Tensor<double>({4}))),
               ContractError);
}

// ---------------------------------------------------------------------------
// patch_merge

TEST(PatchMerge, HalvesGridAndDoublesWidth) {
  Tape<float> t;
  const Var<float> x = t.constant(Tensor<float>({56 * 56, 96}, 1.0f));
  EXPECT_EQ(patch_merge(x, 56, 56, t.constant(Tensor<float>({384, 192}))).shape(), (Shape{28 * 28, 192}));
}

TEST(PatchMerge, ConstantFieldStaysConstant) {
  const std::size_t c = 3;
  Tensor<double> w({4 * c, 2 * c});
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t i = 0; i < c; ++i) {
      w(k * c + i, i) = 0.25;
      w(k * c + i, c + i) = 0.25;
    }
  Tensor<double> field({16, c});
  for (std::size_t n = 0; n < 16; ++n)
    for (std::size_t i = 0; i < c; ++i) field(n, i) = 1.0 + static_cast<double>(i);
  Tape<double> t;
  const Tensor<double> out = patch_merge(t.constant(field), 4, 4, t.constant(w)).value();
  ASSERT_EQ(out.shape(), (Shape{4, 2 * c}));
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t i = 0; i < c; ++i) {
      EXPECT_DOUBLE_EQ(out(n, i), 1.0 + static_cast<double>(i));
      EXPECT_DOUBLE_EQ(out(n, c + i), 1.0 + static_cast<double>(i));
    }
}

TEST(PatchMerge, TokenCountQuarters) {
  for (std::size_t g : {2u, 4u, 8u, 16u, 56u}) {
    Tape<float> t;
    const Var<float> out = patch_merge(t.constant(Tensor<float>({g * g, 4})), g, g, t.constant(Tensor<float>({16, 8})));
    EXPECT_EQ(out.shape()[0], g * g / 4);
  }
}

TEST(PatchMerge, OddGridIsContractError) {
  Tape<double> t;
  EXPECT_THROW(patch_merge(t.constant(Tensor<double>({9, 4})), 3, 3, t.constant(Tensor<double>({16, 8}))),
               ContractError);
}

// ---------------------------------------------------------------------------
// patch_prune

TEST(PatchPrune, FullKeepRatioIsIdentity) {
  Tape<double> t;
  const Var<double> x = t.constant(random_tensor({5, 3}, 1));
  const std::vector<double> scores{0.3, 0.1, 0.5, 0.0, 0.1};
  const auto [kept, idx] = patch_prune(x, std::span<const double>(scores), 1.0);
  EXPECT_EQ(kept.value(), x.value());
  EXPECT_EQ(idx, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(PatchPrune, TiesBreakTowardLowerIndex) {
  const std::vector<double> scores{0.1, 0.4, 0.4, 0.1};
  EXPECT_EQ(select_patches(scores, 0.5), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(select_patches(scores, 0.75), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(select_patches(std::vector<double>{1, 1, 1, 1}, 0.25), (std::vector<std::size_t>{0}));
}

TEST(PatchPrune, KeepsCeilOfRatio) {
  const std::vector<double> scores(10, 1.0);
  EXPECT_EQ(select_patches(scores, 0.3).size(), 3u);
  EXPECT_EQ(select_patches(scores, 0.31).size(), 4u);
  EXPECT_EQ(select_patches(scores, 0.01).size(), 1u);
}

TEST(PatchPrune, NonPositiveRatioIsContractError) {
  const std::vector<double> scores(4, 1.0);
  EXPECT_THROW(select_patches(scores, 0.0), ContractError);
  EXPECT_THROW(select_patches(scores, -0.5), ContractError);
  EXPECT_THROW(select_patches(scores, 1.5), ContractError);
}

// ---------------------------------------------------------------------------
// spatial_forward

TEST(SpatialForward, TokenCountsQuarterPerStage) {
  SpatialConfig cfg;
  cfg.stage_depths = {1, 1, 1};
  cfg.stage_dims = {8, 16, 32};
  cfg.stage_heads = {1, 2, 2};
  cfg.out_dim = 16;
  SpatialTrace trace;
  frame_token(cfg, spatial_params(cfg, 1), random_tensor({64, 64, 3}, 2, 0, 1), &trace);
  EXPECT_EQ(trace.stage_tokens, (std::vector<std::size_t>{256, 64, 16}));
  EXPECT_EQ(trace.kept.size(), 16u);
}

TEST(SpatialForward, IdenticalImagesGiveIdenticalTokens) {
  const SpatialConfig cfg = micro_config();
  const ParamStore<float> p = spatial_params(cfg, 3).cast<float>();
  const Tensor<float> img = random_tensor({32, 32, 3}, 4, 0, 1).cast<float>();
  const Tensor<float> a = frame_token(cfg, p, img);
  const Tensor<float> b = frame_token(cfg, p, Tensor<float>(img));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.shape(), (Shape{32}));
}

TEST(SpatialForward, UnitKeepRatioMatchesUnprunedBitExactly) {
  SpatialConfig cfg = micro_config();
  const ParamStore<double> p = spatial_params(cfg, 5, 0.1);
  const Tensor<double> img = random_tensor({32, 32, 3}, 6, 0, 1);
  cfg.prune_keep_ratio = 1.0;
  const Tensor<double> a = frame_token(cfg, p, img);
  SpatialTrace trace;
  const Tensor<double> b = frame_token(cfg, p, img, &trace);
  EXPECT_EQ(a, b);
  EXPECT_EQ(trace.kept.size(), 16u);
}

// Final-stage tokens computed by hand from the public building blocks.
Tensor<double> final_tokens(const SpatialConfig& cfg, const ParamStore<double>& params, const Tensor<double>& img) {
  Tape<double> t;
  ParamBinder<double> b(t, params, false);
  const Scope<double> p = Scope<double>(b) / "spatial";
  Var<double> x = patch_embed(t.constant(img), cfg.patch, p("patch_embed.w"), p("patch_embed.b"));
  x = ad::add(x, p("pos_embed"));
  std::size_t g = cfg.grid_h();
  x = swmsa_block_pair(p / "stage0" / "pair0", x, g, g, cfg.window, cfg.stage_heads[0]);
  x = patch_merge(x, g, g, (p / "merge1")("w"));
  g /= 2;
  x = swmsa_block_pair(p / "stage1" / "pair0", x, g, g, cfg.window, cfg.stage_heads[1]);
  return x.value();
}

TEST(SpatialForward, PrunedOutputEqualsSubsetMeanOracle) {
  SpatialConfig cfg = micro_config();
  cfg.image_h = cfg.image_w = 64;  // 8x8 final grid
  cfg.prune_keep_ratio = 0.5;
  const ParamStore<double> p = spatial_params(cfg, 7, 0.1);
  const Tensor<double> img = random_tensor({64, 64, 3}, 8, 0, 1);
  SpatialTrace trace;
  const Tensor<double> pruned = frame_token(cfg, p, img, &trace);
  ASSERT_EQ(trace.kept.size(), 32u);
  EXPECT_EQ(trace.kept, select_patches(trace.scores, 0.5));

  const Tensor<double> tokens = final_tokens(cfg, p, img);
  const Tensor<double>& w = p.at("spatial.head.w");
  const Tensor<double>& bias = p.at("spatial.head.b");
  const std::size_t c = tokens.dim(1);
  std::vector<double> mean(c, 0.0);
  for (std::size_t k : trace.kept)
    for (std::size_t i = 0; i < c; ++i) mean[i] += tokens(k, i) / static_cast<double>(trace.kept.size());
  for (std::size_t o = 0; o < cfg.out_dim; ++o) {
    double s = bias[o];
    for (std::size_t i = 0; i < c; ++i) s += mean[i] * w(i, o);
    EXPECT_NEAR(pruned[o], s, 1e-12);
  }

  cfg.prune_keep_ratio = 1.0;
  EXPECT_GT(max_abs_diff(frame_token(cfg, p, img), pruned), 1e-9);
}

TEST(SpatialForward, WrongImageShapeIsDimensionError) {
  const SpatialConfig cfg = micro_config();
  EXPECT_THROW(frame_token(cfg, spatial_params(cfg, 1), Tensor<double>({16, 32, 3})), DimensionError);
}

TEST(SpatialForward, GradientsMatchFiniteDifferences) {
  const SpatialConfig cfg = micro_config();
  const ParamStore<double> p = spatial_params(cfg, 9, 0.1);
  const Tensor<double> img = random_tensor({32, 32, 3}, 10, 0, 1);
  const Tensor<double> probe = random_tensor({32}, 11);
  const LossBuilder loss = [&](const Scope<double>& s) {
    Tape<double>& t = s.tape();
    return ad::sum(ad::mul(spatial_forward(s / "spatial", cfg, t.constant(img)), t.constant(probe)));
  };
  const GradCheckReport r = finite_diff_check(loss, p);
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_EQ(r.params.size(), p.count());
}

// 224x224 images, 16-pixel patches, D = 768: 32 frames give a (1, 32, 768) sequence.
TEST(SpatialForward, FullSizeSequenceShape) {
  SpatialConfig cfg;
  cfg.image_h = cfg.image_w = 224;
  cfg.patch = 16;
  cfg.window = 7;
  cfg.stage_depths = {1};
  cfg.stage_dims = {48};
  cfg.stage_heads = {3};
  cfg.out_dim = 768;
  const ParamStore<float> p = spatial_params(cfg, 12).cast<float>();
  Tape<float> t;
  ParamBinder<float> b(t, p, false);
  const Scope<float> s = Scope<float>(b) / "spatial";
  std::vector<Var<float>> frames;
  SpatialTrace trace;
  for (std::size_t f = 0; f < 32; ++f) {
    frames.push_back(spatial_forward(s, cfg, t.constant(random_tensor({224, 224, 3}, 100 + f, 0, 1).cast<float>()),
                                     f == 0 ? &trace : nullptr));
  }
  const Var<float> seq = ad::reshape(ad::stack(frames), {1, 32, 768});
  EXPECT_EQ(seq.shape(), (Shape{1, 32, 768}));
  EXPECT_EQ(trace.stage_tokens, (std::vector<std::size_t>{196}));
  EXPECT_TRUE(seq.value().all_finite());
}

TEST(SpatialConfig, Validation) {
  SpatialConfig c = micro_config();
  EXPECT_NO_THROW(c.validate());
  c.image_h = 30;
  EXPECT_THROW(c.validate(), ContractError);
  c = micro_config();
  c.stage_dims = {16, 24};
  EXPECT_THROW(c.validate(), ContractError);
  c = micro_config();
  c.prune_keep_ratio = 0.0;
  EXPECT_THROW(c.validate(), ContractError);
}

}  // namespace
}  // namespace stpose
