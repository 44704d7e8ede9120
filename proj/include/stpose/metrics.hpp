// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stpose/camera.hpp"
#include "stpose/tensor.hpp"

namespace stpose {

/// Mean per-joint Euclidean distance over [f, J, 3] (or [J, 3]) inputs, in the
/// inputs' units. With root_centered both poses are shifted so joint `root`
/// sits at the origin first.
double mpjpe(const Tensor<double>& pred, const Tensor<double>& gt, bool root_centered = false,
             std::size_t root = 0);

/// s R pred + t closest to gt in Frobenius norm, det R = +1. Inputs [J, 3].
/// Throws DegeneracyError if the centred gt has rank < 2 or pred collapses to a point.
Tensor<double> procrustes_align(const Tensor<double>& pred, const Tensor<double>& gt);

/// MPJPE after per-frame similarity alignment.
double p_mpjpe(const Tensor<double>& pred, const Tensor<double>& gt);

/// Fraction of joints with error < alpha * diagonal of the gt pose's bounding
/// box. Inputs [..., J, 2]; each trailing [J, 2] block is one pose.
double pck(const Tensor<double>& pred, const Tensor<double>& gt, double alpha = 0.05);

double mse(const Tensor<double>& pred, const Tensor<double>& gt);

/// mean_j exp(-e_j^2 / (2 sigma_j^2 scale^2)), scale^2 = gt bounding-box area.
double oks(const Tensor<double>& pred, const Tensor<double>& gt, const std::vector<double>& sigmas);

struct ApAr {
  double ap = 0.0, ar = 0.0;
};

/// Single-person protocol: one prediction per gt pose, no ranking. At threshold t
/// recall R = #(OKS >= t) / N equals precision, and AP_t is the 101-point
/// interpolated area, R * #{k : k/100 <= R} / 101. Both are averaged over
/// the thresholds.
ApAr oks_ap_ar(const std::vector<double>& oks_values, const std::vector<double>& thresholds);
ApAr oks_ap_ar(const Tensor<double>& pred, const Tensor<double>& gt,
               const std::vector<double>& sigmas, const std::vector<double>& thresholds);

/// 0.50, 0.55, ..., 0.95.
std::vector<double> default_oks_thresholds();

struct Triangulation {
  Eigen::Vector3d point;
  double reprojection_rms = 0.0;  // pixels
};

/// Homogeneous DLT over V >= 2 pixel observations. Throws DegeneracyError when
/// the system is rank deficient or the solution lies at infinity.
Triangulation triangulate_dlt(const std::vector<Eigen::Vector2d>& obs,
                              const std::vector<CameraModel>& cams);

/// Normalized [f, V, J, 2] -> [f, J, 3] world points.
Tensor<double> triangulate_sequence(const Tensor<double>& pose2d, const std::vector<CameraModel>& cams);

struct MetricValues {
  double ap = 0.0, ar = 0.0, pck = 0.0, mse = 0.0;
  std::optional<double> mpjpe, p_mpjpe;  // millimetres
};

struct MetricOptions {
  double pck_alpha = 0.05;
  double oks_sigma = 0.05;
  std::vector<double> oks_thresholds = default_oks_thresholds();
  bool root_centered = false;
};

struct MetricReport {
  MetricOptions options;
  std::size_t samples = 0, poses = 0;
  MetricValues overall;  // pooled over every pose
  std::map<std::string, MetricValues> per_action;
};

/// Collects per-sample results; finish() pools them overall and per action.
class MetricAccumulator {
 public:
  explicit MetricAccumulator(MetricOptions options = {});

  /// pred2d, gt2d [f, V, J, 2] normalized. With cameras and gt3d [f, J, 3] in
  /// metres, predictions are triangulated for MPJPE / P-MPJPE.
  void add(const std::string& action, const Tensor<double>& pred2d, const Tensor<double>& gt2d,
           const std::vector<CameraModel>* cams = nullptr, const Tensor<double>* gt3d = nullptr);

  MetricReport finish() const;

 private:
  struct Sums {
    std::size_t joints = 0, hits = 0, coords = 0, frames3d = 0, joints3d = 0;
    double sq = 0.0, mpjpe = 0.0, p_mpjpe = 0.0;
    std::vector<double> oks;
    std::size_t samples = 0;
    bool all3d = true;
  };
  static void merge(Sums& into, const Sums& s);
  MetricValues values(const Sums& s) const;

  MetricOptions options_;
  Sums overall_;
  std::map<std::string, Sums> per_action_;
};

/// JSON text matching schema/metrics.schema.json.
std::string report_to_json(const MetricReport& report);
MetricReport report_from_json(const std::string& text);

/// One row per metric, one column per action label plus Average, the mean of
/// the action columns that have data. Empty cells for absent actions.
std::string report_to_csv(const MetricReport& report, const std::vector<std::string>& actions);

}  // namespace stpose
