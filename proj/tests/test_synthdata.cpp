// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

#include "stpose/camera.hpp"
#include "stpose/error.hpp"
#include "stpose/metrics.hpp"
#include "stpose/rng.hpp"
#include "stpose/synthdata.hpp"
#include "test_util.hpp"

namespace stpose {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

// ---------------------------------------------------------------------------
// skeleton

TEST(MakeSequence, SameSeedIsBitIdentical) {
  const SkeletonSequence a = make_sequence(42, 16, 17, action_motion(3));
  const SkeletonSequence b = make_sequence(42, 16, 17, action_motion(3));
  EXPECT_EQ(a.positions, b.positions);
  EXPECT_GT(max_abs_diff(a.positions, make_sequence(43, 16, 17, action_motion(3)).positions), 1e-3);
}

TEST(MakeSequence, ZeroAmplitudeIsStatic) {
  MotionParams m = action_motion(5);
  m.amplitude = 0.0;
  m.root_drift = 0.0;
  const SkeletonSequence s = make_sequence(7, 10, 17, m);
  for (std::size_t t = 1; t < 10; ++t)
    for (std::size_t j = 0; j < 17; ++j)
      for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(s.positions(t, j, k), s.positions(0, j, k));
}

TEST(MakeSequence, BoneLengthsAreConstant) {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const SkeletonSequence s = make_sequence(seed, 64, 17, action_motion(seed));
    const Tensor<double> len = s.bone_lengths();
    for (std::size_t j = 1; j < 17; ++j) {
      double lo = len(0, j), hi = len(0, j);
      for (std::size_t t = 0; t < 64; ++t) {
        // recompute from positions rather than trusting bone_lengths()
        const int p = s.parents[j];
        double d2 = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
          const double d = s.positions(t, j, k) - s.positions(t, static_cast<std::size_t>(p), k);
          d2 += d * d;
        }
        lo = std::min(lo, std::sqrt(d2));
        hi = std::max(hi, std::sqrt(d2));
      }
      EXPECT_LT(hi - lo, 1e-6) << "seed " << seed << " joint " << j;
      EXPECT_GT(lo, 0.01);
    }
  }
}

TEST(MakeSequence, LongerSequenceExtendsShorter) {
  const SkeletonSequence a = make_sequence(9, 4, 17);
  const SkeletonSequence b = make_sequence(9, 12, 17);
  for (std::size_t i = 0; i < a.positions.size(); ++i) EXPECT_EQ(a.positions[i], b.positions[i]);
}

TEST(MakeSequence, SmallSkeletonUsesTreePrefix) {
  const SkeletonSequence s = make_sequence(1, 3, 5);
  EXPECT_EQ(s.positions.shape(), (Shape{3, 5, 3}));
  EXPECT_EQ(s.parents, std::vector<int>(skeleton_parents().begin(), skeleton_parents().begin() + 5));
  EXPECT_EQ(s.parents[0], -1);
}

TEST(MakeSequence, JointCountOutOfRangeIsContractError) {
  EXPECT_THROW(make_sequence(0, 4, 1), ContractError);
  EXPECT_THROW(make_sequence(0, 4, 18), ContractError);
}

TEST(Skeleton, LabelsAndGroups) {
  EXPECT_EQ(skeleton_parents().size(), 17u);
  EXPECT_EQ(joint_names().size(), 17u);
  EXPECT_EQ(action_labels().size(), 15u);
  for (std::size_t j = 0; j < 17; ++j) {
    EXPECT_GE(joint_group(j), 0);
    EXPECT_LE(joint_group(j), 2);
    EXPECT_LT(skeleton_parents()[j], static_cast<int>(j));
  }
}

// ---------------------------------------------------------------------------
// cameras

TEST(Project, OpticalAxisMapsToPrincipalPoint) {
  const CameraModel cam = default_rig()[1];
  const Eigen::Vector3d c = cam.center();
  const Eigen::Vector3d axis = cam.rotation.row(2).transpose();
  for (double z : {0.5, 2.0, 9.0}) {
    const Eigen::Vector2d uv = project(c + z * axis, cam);
    EXPECT_NEAR(uv.x(), cam.cx, 1e-9);
    EXPECT_NEAR(uv.y(), cam.cy, 1e-9);
  }
}

TEST(Project, DoublingDepthHalvesOffset) {
  CameraModel cam;
  cam.fx = 800;
  cam.fy = 820;
  cam.cx = 320;
  cam.cy = 240;
  const Eigen::Vector2d a = project({0.3, -0.2, 2.0}, cam);
  const Eigen::Vector2d b = project({0.6, -0.4, 4.0} /* same ray */, cam);
  EXPECT_NEAR(b.x(), a.x(), 1e-12);
  const Eigen::Vector2d far = project({0.3, -0.2, 4.0}, cam);
  EXPECT_NEAR(far.x() - cam.cx, 0.5 * (a.x() - cam.cx), 1e-12);
  EXPECT_NEAR(far.y() - cam.cy, 0.5 * (a.y() - cam.cy), 1e-12);
  EXPECT_NEAR(a.x(), 800 * 0.15 + 320, 1e-12);
}

TEST(Project, BehindCameraThrows) {
  const CameraModel cam;
  EXPECT_THROW(project({0, 0, -1}, cam), BehindCameraError);
  EXPECT_THROW(project({0, 0, 0}, cam), BehindCameraError);
}

TEST(Camera, RigIsValidAndAimedAtTarget) {
  const auto rig = default_rig();
  ASSERT_EQ(rig.size(), 4u);
  for (const auto& cam : rig) {
    EXPECT_NO_THROW(cam.validate());
    const Eigen::Vector2d uv = project({0, 0, 0.95}, cam);
    EXPECT_NEAR(uv.x(), 500.0, 1e-9);
    EXPECT_NEAR(uv.y(), 500.0, 1e-9);
    EXPECT_NEAR(std::hypot(cam.center().x(), cam.center().y()), 3.0, 1e-12);
  }
}

TEST(Camera, ImproperRotationIsRejected) {
  CameraModel cam;
  cam.rotation(0, 0) = -1.0;
  EXPECT_THROW(cam.validate(), ContractError);
  CameraModel skew;
  skew.rotation(0, 1) = 0.1;
  EXPECT_THROW(skew.validate(), ContractError);
  CameraModel f;
  f.fx = 0.0;
  EXPECT_THROW(f.validate(), ContractError);
}

TEST(Triangulation, RigRoundTripIsExact) {
  const auto rig = default_rig();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.8, 0.8), h(0.0, 1.9);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d x(u(rng), u(rng), h(rng));
    std::vector<Eigen::Vector2d> obs;
    for (const auto& cam : rig) obs.push_back(project(x, cam));
    EXPECT_LT((triangulate_dlt(obs, rig).point - x).norm(), 1e-8);
  }
}

TEST(Rig, EveryJointIsInFrontOfEveryCamera) {
  DatasetConfig cfg;
  cfg.frames = 64;
  cfg.image_size = 8;
  for (std::size_t i = 0; i < 30; ++i) {
    const PoseSequenceSample s = generate_sample(cfg, i);
    for (std::size_t t = 0; t < cfg.frames; ++t)
      for (std::size_t j = 0; j < 17; ++j) {
        const Eigen::Vector3d x(s.skeleton.positions(t, j, 0), s.skeleton.positions(t, j, 1),
                                s.skeleton.positions(t, j, 2));
        for (const auto& cam : s.cameras) {
          EXPECT_GT(cam.to_camera(x).z(), 0.5);
          const Eigen::Vector2d uv = project(x, cam);
          EXPECT_GT(uv.x(), 0.0);
          EXPECT_LT(uv.x(), 1000.0);
          EXPECT_GT(uv.y(), 0.0);
          EXPECT_LT(uv.y(), 1000.0);
        }
      }
  }
}

// ---------------------------------------------------------------------------
// rendering

TEST(Render, CenteredJointPeaksAtCenter) {
  Tensor<double> pose({1, 2});
  pose(0, 0) = pose(0, 1) = 0.5;
  const Tensor<float> img = render_image(pose, 64, 64, 2.0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < img.size(); ++i)
    if (img[i] > img[best]) best = i;
  EXPECT_EQ(best / 3 / 64, 32u);
  EXPECT_EQ(best / 3 % 64, 32u);
  EXPECT_EQ(img(32, 32, 0), 1.0f);
}

TEST(Render, NoVisibleJointsGivesBlankImage) {
  EXPECT_EQ(render_image(Tensor<double>(), 16, 16, 2.0), Tensor<float>({16, 16, 3}));
  Tensor<double> pose({3, 2}, 0.5);
  EXPECT_EQ(render_image(pose, 16, 16, 2.0, {false, false, false}), Tensor<float>({16, 16, 3}));
}

TEST(Render, BlobIntegralMatchesGaussianMass) {
  for (double sigma : {2.0, 3.0, 4.5}) {
    Tensor<double> pose({1, 2});
    pose(0, 0) = 0.43;
    pose(0, 1) = 0.57;
    const Tensor<float> img = render_image(pose, 128, 128, sigma);
    double mass = 0.0;
    for (std::size_t i = 0; i < img.size(); i += 3) mass += img[i];
    EXPECT_NEAR(mass / (2.0 * M_PI * sigma * sigma), 1.0, 0.02) << sigma;
  }
}

TEST(Render, ChannelFollowsJointGroupAndValuesClip) {
  Tensor<double> pose({17, 2}, 0.5);
  const Tensor<float> img = render_image(pose, 32, 32, 2.0);
  for (float v : img.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  for (std::size_t j = 0; j < 17; ++j) {
    std::vector<bool> only(17, false);
    only[j] = true;
    const Tensor<float> one = render_image(pose, 32, 32, 2.0, only);
    for (std::size_t ch = 0; ch < 3; ++ch)
      EXPECT_EQ(one(16, 16, ch), ch == static_cast<std::size_t>(joint_group(j)) ? 1.0f : 0.0f);
  }
}

// ---------------------------------------------------------------------------
// samples and datasets

DatasetConfig small_dataset() {
  DatasetConfig c;
  c.seed = 11;
  c.samples = 3;
  c.frames = 4;
  c.joints = 17;
  c.views = 4;
  c.image_size = 32;
  c.occlusion = 0.2;
  return c;
}

TEST(Dataset, GenerationIsPureFunctionOfConfig) {
  const auto a = generate_dataset(small_dataset());
  const auto b = generate_dataset(small_dataset());
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].images, b[i].images);
    EXPECT_EQ(a[i].pose2d, b[i].pose2d);
    EXPECT_EQ(a[i].skeleton.positions, b[i].skeleton.positions);
    EXPECT_EQ(a[i].action, b[i].action);
  }
  DatasetConfig other = small_dataset();
  other.seed = 12;
  EXPECT_NE(generate_dataset(other)[0].pose2d, a[0].pose2d);
}

TEST(Dataset, SampleIndexOffsetSelectsSameSample) {
  DatasetConfig c = small_dataset();
  const PoseSequenceSample third = generate_sample(c, 2);
  c.first_index = 2;
  const PoseSequenceSample first = generate_sample(c, 0);
  EXPECT_EQ(first.pose2d, third.pose2d);
  EXPECT_EQ(first.images, third.images);
}

TEST(Dataset, ActionsCycleThroughLabels) {
  DatasetConfig c = small_dataset();
  c.image_size = 4;
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(generate_sample(c, i).action, action_labels()[i % 15]);
}

TEST(Dataset, StoredPosesMatchReprojection) {
  for (const auto& s : generate_dataset(small_dataset())) {
    EXPECT_LT(max_abs_diff(project_sequence(s.skeleton, s.cameras), s.pose2d), 1e-9);
    ASSERT_EQ(s.pose2d.shape(), (Shape{4, 4, 17, 2}));
    // manual projection of one joint
    const Eigen::Vector3d x(s.skeleton.positions(2, 5, 0), s.skeleton.positions(2, 5, 1), s.skeleton.positions(2, 5, 2));
    const Eigen::Vector2d uv = project(x, s.cameras[3]);
    EXPECT_NEAR(s.pose2d(2, 3, 5, 0), uv.x() / 1000.0, 1e-12);
    EXPECT_NEAR(s.pose2d(2, 3, 5, 1), uv.y() / 1000.0, 1e-12);
  }
}

TEST(Dataset, OcclusionDropsBlobsButKeepsGroundTruth) {
  DatasetConfig c = small_dataset();
  c.occlusion = 0.0;
  const PoseSequenceSample clear = generate_sample(c, 0);
  c.occlusion = 1.0;
  const PoseSequenceSample hidden = generate_sample(c, 0);
  EXPECT_EQ(clear.pose2d, hidden.pose2d);
  for (float v : hidden.images.data()) EXPECT_EQ(v, 0.0f);
  c.occlusion = 0.3;
  const PoseSequenceSample some = generate_sample(c, 0);
  EXPECT_NE(some.images, clear.images);
  EXPECT_NE(some.images, hidden.images);
}

TEST(Dataset, ConfigValidation) {
  DatasetConfig c = small_dataset();
  c.joints = 18;
  EXPECT_THROW(c.validate(), ValidationError);
  c = small_dataset();
  c.occlusion = 1.5;
  EXPECT_THROW(c.validate(), ValidationError);
  c = small_dataset();
  c.frames = 0;
  EXPECT_THROW(c.validate(), ValidationError);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(DatasetIo, RoundTripIsBitIdentical) {
  TempDir a("io_a"), b("io_b");
  const Dataset data{small_dataset(), generate_dataset(small_dataset())};
  write_dataset(data, a.path());
  const Dataset back = read_dataset(a.path());
  ASSERT_EQ(back.samples.size(), 3u);
  EXPECT_EQ(back.config.seed, 11u);
  EXPECT_EQ(back.config.occlusion, 0.2);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.samples[i].images, data.samples[i].images);
    EXPECT_EQ(back.samples[i].pose2d, data.samples[i].pose2d.cast<float>().cast<double>());
    EXPECT_EQ(back.samples[i].skeleton.positions, data.samples[i].skeleton.positions.cast<float>().cast<double>());
    EXPECT_EQ(back.samples[i].action, data.samples[i].action);
    EXPECT_EQ(back.samples[i].subject, data.samples[i].subject);
    for (std::size_t v = 0; v < 4; ++v) {
      EXPECT_EQ(back.samples[i].cameras[v].rotation, data.samples[i].cameras[v].rotation);
      EXPECT_EQ(back.samples[i].cameras[v].translation, data.samples[i].cameras[v].translation);
      EXPECT_EQ(back.samples[i].cameras[v].fx, data.samples[i].cameras[v].fx);
    }
  }
  write_dataset(back, b.path());
  for (const auto& entry : fs::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a.path());
    EXPECT_EQ(slurp(entry.path()), slurp(b.path() / rel)) << rel;
  }
}

TEST(DatasetIo, StoredPosesStayConsistentWithStoredCameras) {
  TempDir dir("io_reproj");
  write_dataset({small_dataset(), generate_dataset(small_dataset())}, dir.path());
  for (const auto& s : read_dataset(dir.path()).samples) {
    // f32 payloads: agreement is limited by single precision
    EXPECT_LT(max_abs_diff(project_sequence(s.skeleton, s.cameras), s.pose2d), 1e-6);
  }
}

TEST(DatasetIo, MissingTensorFileIsNamed) {
  TempDir dir("io_missing");
  write_dataset({small_dataset(), generate_dataset(small_dataset())}, dir.path());
  fs::remove(dir.path() / "sample_0001" / "images.bin");
  try {
    read_dataset(dir.path());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("images.bin"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, MissingManifestFieldIsNamed) {
  TempDir dir("io_field");
  write_dataset({small_dataset(), generate_dataset(small_dataset())}, dir.path());
  const fs::path mf = dir.path() / "manifest.json";
  nlohmann::json m = nlohmann::json::parse(slurp(mf));
  m.erase("frames");
  std::ofstream(mf) << m.dump();
  try {
    read_dataset(dir.path());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("manifest.json"), std::string::npos) << msg;
    EXPECT_NE(msg.find("frames"), std::string::npos) << msg;
  }
}

TEST(DatasetIo, JointCountMismatchIsValidationError) {
  TempDir dir("io_joints");
  write_dataset({small_dataset(), generate_dataset(small_dataset())}, dir.path());
  const fs::path mf = dir.path() / "manifest.json";
  nlohmann::json m = nlohmann::json::parse(slurp(mf));
  m["joints"] = 16;
  std::ofstream(mf) << m.dump();
  EXPECT_THROW(read_dataset(dir.path()), ValidationError);
}

TEST(DatasetIo, TensorSidecarRoundTrip) {
  TempDir dir("io_tensor");
  const Tensor<float> t = testing::random_tensor({2, 3, 5}, 4).cast<float>();
  write_tensor_f32(dir.path() / "x.bin", t);
  EXPECT_TRUE(fs::exists(dir.path() / "x.shape.json"));
  EXPECT_EQ(read_tensor_f32(dir.path() / "x.bin"), t);
  EXPECT_EQ(fs::file_size(dir.path() / "x.bin"), 30u * 4u);
}

TEST(Seeds, DerivedSeedsDifferPerId) {
  EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
  EXPECT_NE(derive_seed(1, {2}), derive_seed(2, {2}));
}

}  // namespace
}  // namespace stpose
