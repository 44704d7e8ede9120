// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace stpose {

/// Pinhole camera. Extrinsics map world to camera coordinates,
/// X_cam = R X_world + t, with x right, y down, z along the optical axis.
struct CameraModel {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;  // pixels
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  std::size_t width = 1, height = 1;  // sensor size in pixels

  /// Throws ContractError unless R is a proper rotation (1e-9) and fx, fy > 0.
  void validate() const;

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
    return rotation * world + translation;
  }
  /// K [R | t].
  Eigen::Matrix<double, 3, 4> projection_matrix() const;
  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
};

/// (u, v) = (fx x/z + cx, fy y/z + cy). Throws BehindCameraError if z <= 0.
Eigen::Vector2d project(const Eigen::Vector3d& world, const CameraModel& cam);

/// Camera at `eye` aimed at `target`; `up` is the world up direction.
CameraModel look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                    const Eigen::Vector3d& up, double focal, std::size_t width,
                    std::size_t height);

struct RigConfig {
  std::size_t views = 4;
  double radius = 3.0;       // metres from the vertical axis through the target
  double height = 1.2;       // camera height above the floor
  double target_height = 0.95;
  double focal = 1150.0;     // pixels
  std::size_t width = 1000;
  std::size_t height_px = 1000;
};

/// Cameras on a horizontal ring with equal angular spacing (90 degrees for four
/// views), all aimed at the point above the origin at target_height. World
/// up is +z.
std::vector<CameraModel> default_rig(const RigConfig& cfg = {});

}  // namespace stpose
