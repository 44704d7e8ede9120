// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stpose/metrics.hpp"
#include "stpose/model.hpp"
#include "stpose/synthdata.hpp"

namespace stpose {

enum class Precision { f32, f64 };

Precision parse_precision(const std::string& s);
std::string to_string(Precision p);

struct DataConfig {
  std::size_t train_samples = 8;
  std::size_t eval_samples = 4;  // 0: evaluate on the training split
  std::size_t frames = 8;
  std::size_t joints = 17;
  std::size_t views = 4;
  std::size_t image_size = 64;
  double blob_sigma = 2.0;
  double occlusion_train = 0.0;
  double occlusion_eval = 0.0;
  double amplitude = 1.0;
};

struct OptimizerConfig {
  double lr = 1e-3;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t grad_accum = 1;  // samples per optimizer step
};

struct ScheduleConfig {
  std::size_t epochs = 100;
  std::size_t warmup_epochs = 20;
  std::size_t checkpoint_every = 10;  // epochs; 0 keeps only the final checkpoint
};

struct EvalConfig {
  double pck_alpha = 0.05;
  double oks_sigma = 0.05;
  std::vector<double> oks_thresholds = default_oks_thresholds();
  bool root_centered = false;
  std::size_t every = 1;  // epochs between eval passes; 0 evaluates only at the end
};

/// Spatial and relation hyperparameters. Image size, views, joints and the
/// token width are filled in from the data section.
struct ArchConfig {
  std::size_t patch = 4;
  std::vector<std::size_t> stage_depths{2, 2};
  std::vector<std::size_t> stage_dims{32, 64};
  std::vector<std::size_t> stage_heads{2, 4};
  std::size_t window = 4;
  std::size_t mlp_ratio = 4;
  double prune_keep_ratio = 1.0;
  bool patch_pos_embed = true;
  std::size_t token_dim = 64;
  std::size_t relation_layers = 2;
  std::size_t relation_heads = 4;
  std::size_t max_frames = 128;
};

struct RunConfig {
  std::uint64_t seed = 0;
  ArchConfig model;
  bool ablate_relations = false;
  DataConfig data;
  OptimizerConfig optimizer;
  ScheduleConfig schedule;
  EvalConfig eval;
  Precision precision = Precision::f32;

  /// Throws ValidationError.
  void validate() const;
  ModelConfig model_config() const;
  DatasetConfig train_data() const;
  DatasetConfig eval_data() const;
  MetricOptions metric_options() const;
  std::uint64_t init_seed() const;
  std::uint64_t data_seed() const;
};

/// Unknown keys and wrong types raise ParseError naming the key.
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::filesystem::path& file);
std::string config_to_json(const RunConfig& cfg);

/// FNV-1a over the canonical JSON form.
std::uint64_t config_hash(const RunConfig& cfg);

}  // namespace stpose
