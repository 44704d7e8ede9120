// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stpose/camera.hpp"
#include "stpose/tensor.hpp"

namespace stpose {

inline constexpr std::size_t kMaxJoints = 17;

/// Pelvis-rooted 17-joint tree. Smaller skeletons use a prefix of it.
const std::vector<int>& skeleton_parents();
const std::vector<std::string>& joint_names();
/// 0 torso and head, 1 right limbs, 2 left limbs. Doubles as the render channel.
int joint_group(std::size_t joint);

const std::vector<std::string>& action_labels();  // 15 entries

struct MotionParams {
  double amplitude = 1.0;   // scales every joint-angle swing; 0 freezes the pose
  double frequency = 1.0;   // Hz
  double root_drift = 0.1;  // metres of horizontal pelvis sway
};

/// Per-action motion preset.
MotionParams action_motion(std::size_t action);

struct SkeletonSequence {
  std::size_t joints = 0, frames = 0;
  Tensor<double> positions;  // [f, J, 3], metres
  std::vector<int> parents;  // -1 for the root
  double fps = 50.0;

  /// [f, J]; the root entry is 0.
  Tensor<double> bone_lengths() const;
};

/// Deterministic in `seed`. Frame t depends only on (seed, t, J, motion), so a
/// longer sequence extends a shorter one. Throws ContractError for J < 2 or J > 17.
SkeletonSequence make_sequence(std::uint64_t seed, std::size_t frames, std::size_t joints,
                               const MotionParams& motion = {}, double fps = 50.0);

/// Pixel-space projection of all joints, divided by image size: [f, V, J, 2].
Tensor<double> project_sequence(const SkeletonSequence& seq, const std::vector<CameraModel>& cams);

/// Gaussian blobs at normalized positions `pose2d` [J, 2] on an h x w x 3 image.
/// Joints with `visible[j] == false` are skipped; an empty mask means all visible.
Tensor<float> render_image(const Tensor<double>& pose2d, std::size_t height, std::size_t width,
                           double blob_sigma, const std::vector<bool>& visible = {});

struct PoseSequenceSample {
  std::string action, subject;
  SkeletonSequence skeleton;
  std::vector<CameraModel> cameras;
  Tensor<double> pose2d;  // [f, V, J, 2], normalized
  Tensor<float> images;   // [f, V, H, W, 3]
};

struct DatasetConfig {
  std::uint64_t seed = 0;
  std::size_t samples = 8;
  std::size_t frames = 8;
  std::size_t joints = 17;
  std::size_t views = 4;
  std::size_t image_size = 64;
  double blob_sigma = 2.0;
  double occlusion = 0.0;   // per (frame, view, joint) blob drop probability
  double amplitude = 1.0;   // multiplies the per-action preset
  std::size_t first_index = 0;  // sample ids start here; lets splits share a seed

  void validate() const;
};

/// Pure function of the config.
std::vector<PoseSequenceSample> generate_dataset(const DatasetConfig& cfg);
PoseSequenceSample generate_sample(const DatasetConfig& cfg, std::size_t index);

struct Dataset {
  DatasetConfig config;
  std::vector<PoseSequenceSample> samples;
};

void write_dataset(const Dataset& data, const std::filesystem::path& dir);
/// Throws ParseError naming the file and field on malformed input and
/// ValidationError when tensor extents disagree with the manifest.
Dataset read_dataset(const std::filesystem::path& dir);

/// Raw little-endian f32 tensor with a `<name>.shape.json` sidecar.
void write_tensor_f32(const std::filesystem::path& file, const Tensor<float>& t);
Tensor<float> read_tensor_f32(const std::filesystem::path& file);

}  // namespace stpose
