// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "stpose/camera.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>

#include "stpose/error.hpp"

namespace stpose {

void CameraModel::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw ContractError("camera: focal lengths must be positive");
  if (width == 0 || height == 0) throw ContractError("camera: image size must be positive");
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-9) throw ContractError("camera: rotation is not orthonormal");
  if (std::abs(rotation.determinant() - 1.0) > 1e-9) {
    throw ContractError("camera: rotation determinant is not +1");
  }
}

Eigen::Matrix<double, 3, 4> CameraModel::projection_matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  Eigen::Matrix<double, 3, 4> rt;
  rt.leftCols<3>() = rotation;
  rt.col(3) = translation;
  return k * rt;
}

Eigen::Vector2d project(const Eigen::Vector3d& world, const CameraModel& cam) {
  const Eigen::Vector3d p = cam.to_camera(world);
  if (!(p.z() > 0.0)) throw BehindCameraError("project: point is behind the camera");
  return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
}

CameraModel look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                    const Eigen::Vector3d& up, double focal, std::size_t width,
                    std::size_t height) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  const Eigen::Vector3d right = forward.cross(up).normalized();
  const Eigen::Vector3d down = forward.cross(right);
  CameraModel cam;
  cam.rotation.row(0) = right;
  cam.rotation.row(1) = down;
  cam.rotation.row(2) = forward;
  cam.translation = -cam.rotation * eye;
  cam.fx = cam.fy = focal;
  cam.cx = static_cast<double>(width) / 2.0;
  cam.cy = static_cast<double>(height) / 2.0;
  cam.width = width;
  cam.height = height;
  cam.validate();
  return cam;
}

std::vector<CameraModel> default_rig(const RigConfig& cfg) {
  if (cfg.views == 0) throw ContractError("rig: at least one view required");
  std::vector<CameraModel> cams;
  const Eigen::Vector3d target(0.0, 0.0, cfg.target_height);
  for (std::size_t k = 0; k < cfg.views; ++k) {
    const double angle = std::numbers::pi / 4.0 +
                         2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(cfg.views);
    const Eigen::Vector3d eye(cfg.radius * std::cos(angle), cfg.radius * std::sin(angle), cfg.height);
    cams.push_back(look_at(eye, target, Eigen::Vector3d::UnitZ(), cfg.focal, cfg.width, cfg.height_px));
  }
  return cams;
}

}  // namespace stpose
