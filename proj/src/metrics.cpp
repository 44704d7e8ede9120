// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "stpose/metrics.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "stpose/error.hpp"

namespace stpose {

using json = nlohmann::json;

namespace {

void same_shape(const Tensor<double>& a, const Tensor<double>& b, const char* op) {
  if (a.empty() || b.empty() || a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

void check_last(const Tensor<double>& a, std::size_t last, std::size_t min_rank, const char* op) {
  if (a.rank() < min_rank || a.shape().back() != last) {
    throw DimensionError(std::string(op) + ": unexpected shape " + shape_string(a.shape()));
  }
}

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

Points as_points(const Tensor<double>& t, std::size_t offset, std::size_t n) {
  return Eigen::Map<const Points>(t.data().data() + offset * 3, static_cast<Eigen::Index>(n), 3);
}

// Bounding box of one [J, 2] pose starting at `offset` joints.
std::pair<double, double> bbox_extent(const Tensor<double>& gt, std::size_t offset, std::size_t joints) {
  double x0 = gt[offset * 2], x1 = x0, y0 = gt[offset * 2 + 1], y1 = y0;
  for (std::size_t j = 0; j < joints; ++j) {
    const double x = gt[(offset + j) * 2], y = gt[(offset + j) * 2 + 1];
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
  return {x1 - x0, y1 - y0};
}

}  // namespace

double mpjpe(const Tensor<double>& pred, const Tensor<double>& gt, bool root_centered, std::size_t root) {
  same_shape(pred, gt, "mpjpe");
  check_last(pred, 3, 2, "mpjpe");
  const std::size_t joints = pred.shape()[pred.rank() - 2];
  const std::size_t frames = pred.size() / (joints * 3);
  if (root_centered && root >= joints) throw ContractError("mpjpe: root joint out of range");
  double total = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    const Points p = as_points(pred, f * joints, joints), g = as_points(gt, f * joints, joints);
    Eigen::RowVector3d shift = Eigen::RowVector3d::Zero();
    if (root_centered) shift = (p.row(static_cast<Eigen::Index>(root)) - g.row(static_cast<Eigen::Index>(root)));
    for (Eigen::Index j = 0; j < p.rows(); ++j) total += (p.row(j) - shift - g.row(j)).norm();
  }
  return total / static_cast<double>(frames * joints);
}

Tensor<double> procrustes_align(const Tensor<double>& pred, const Tensor<double>& gt) {
  same_shape(pred, gt, "procrustes_align");
  if (pred.rank() != 2 || pred.shape()[1] != 3) {
    throw DimensionError("procrustes_align: expected [J, 3], got " + shape_string(pred.shape()));
  }
  const std::size_t joints = pred.shape()[0];
  if (joints < 3) throw ContractError("procrustes_align: need at least 3 joints");
  const Points p = as_points(pred, 0, joints), g = as_points(gt, 0, joints);
  const Eigen::RowVector3d mp = p.colwise().mean(), mg = g.colwise().mean();
  const Points x = p.rowwise() - mp, y = g.rowwise() - mg;

  const Eigen::JacobiSVD<Points> gsvd(y);
  const auto gs = gsvd.singularValues();
  if (!(gs[0] > 0.0) || gs[1] <= 1e-12 * gs[0]) {
    throw DegeneracyError("procrustes_align: ground truth is collinear or coincident");
  }
  const double var_x = x.squaredNorm();
  if (!(var_x > 1e-300)) throw DegeneracyError("procrustes_align: prediction collapses to a point");

  const Eigen::Matrix3d cov = y.transpose() * x;  // sum_i y_i x_i^T
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d sign(1.0, 1.0, 1.0);
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) sign[2] = -1.0;
  const Eigen::Matrix3d r = svd.matrixU() * sign.asDiagonal() * svd.matrixV().transpose();
  const double s = svd.singularValues().dot(sign) / var_x;
  const Eigen::RowVector3d t = mg - s * mp * r.transpose();

  Tensor<double> out({joints, 3});
  Eigen::Map<Points> o(out.data().data(), static_cast<Eigen::Index>(joints), 3);
  o = (s * p * r.transpose()).rowwise() + t;
  return out;
}

double p_mpjpe(const Tensor<double>& pred, const Tensor<double>& gt) {
  same_shape(pred, gt, "p_mpjpe");
  check_last(pred, 3, 2, "p_mpjpe");
  const std::size_t joints = pred.shape()[pred.rank() - 2];
  const std::size_t frames = pred.size() / (joints * 3);
  double total = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    auto slice = [&](const Tensor<double>& t) {
      return Tensor<double>({joints, 3}, std::vector<double>(t.data().begin() + f * joints * 3,
                                                             t.data().begin() + (f + 1) * joints * 3));
    };
    const Tensor<double> g = slice(gt);
    total += mpjpe(procrustes_align(slice(pred), g), g) * static_cast<double>(joints);
  }
  return total / static_cast<double>(frames * joints);
}

double pck(const Tensor<double>& pred, const Tensor<double>& gt, double alpha) {
  same_shape(pred, gt, "pck");
  check_last(pred, 2, 2, "pck");
  if (!(alpha > 0.0)) throw ContractError("pck: alpha must be positive");
  const std::size_t joints = pred.shape()[pred.rank() - 2];
  const std::size_t poses = pred.size() / (joints * 2);
  std::size_t hits = 0;
  for (std::size_t n = 0; n < poses; ++n) {
    const auto [w, h] = bbox_extent(gt, n * joints, joints);
    const double diag = std::hypot(w, h);
    if (!(diag > 0.0)) throw DegeneracyError("pck: ground-truth bounding box has zero size");
    for (std::size_t j = 0; j < joints; ++j) {
      const std::size_t i = (n * joints + j) * 2;
      if (std::hypot(pred[i] - gt[i], pred[i + 1] - gt[i + 1]) < alpha * diag) ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(poses * joints);
}

double mse(const Tensor<double>& pred, const Tensor<double>& gt) {
  same_shape(pred, gt, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - gt[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

double oks(const Tensor<double>& pred, const Tensor<double>& gt, const std::vector<double>& sigmas) {
  same_shape(pred, gt, "oks");
  if (pred.rank() != 2 || pred.shape()[1] != 2) throw DimensionError("oks: expected [J, 2]");
  const std::size_t joints = pred.shape()[0];
  if (sigmas.size() != joints && sigmas.size() != 1) {
    throw DimensionError("oks: need one sigma or one per joint");
  }
  const auto [w, h] = bbox_extent(gt, 0, joints);
  const double area = w * h;
  if (!(area > 0.0)) throw DegeneracyError("oks: ground-truth bounding box has zero area");
  double s = 0.0;
  for (std::size_t j = 0; j < joints; ++j) {
    const double sigma = sigmas.size() == 1 ? sigmas[0] : sigmas[j];
    if (!(sigma > 0.0)) throw ContractError("oks: sigmas must be positive");
    const double dx = pred(j, 0) - gt(j, 0), dy = pred(j, 1) - gt(j, 1);
    s += std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma * area));
  }
  return s / static_cast<double>(joints);
}

std::vector<double> default_oks_thresholds() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) t.push_back(0.5 + 0.05 * k);
  return t;
}

ApAr oks_ap_ar(const std::vector<double>& oks_values, const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw ContractError("oks_ap_ar: empty threshold list");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0 && thresholds[i] < 1.0) || (i && thresholds[i] <= thresholds[i - 1])) {
      throw ContractError("oks_ap_ar: thresholds must be increasing within (0, 1)");
    }
  }
  if (oks_values.empty()) throw ContractError("oks_ap_ar: no poses");
  const std::size_t n = oks_values.size();
  ApAr r;
  for (double t : thresholds) {
    std::size_t tp = 0;
    for (double o : oks_values) tp += o >= t ? 1 : 0;
    const double recall = static_cast<double>(tp) / static_cast<double>(n);
    const std::size_t levels = tp == 0 ? 0 : (100 * tp) / n + 1;
    r.ap += recall * static_cast<double>(levels) / 101.0;
    r.ar += recall;
  }
  r.ap /= static_cast<double>(thresholds.size());
  r.ar /= static_cast<double>(thresholds.size());
  return r;
}

ApAr oks_ap_ar(const Tensor<double>& pred, const Tensor<double>& gt, const std::vector<double>& sigmas,
               const std::vector<double>& thresholds) {
  same_shape(pred, gt, "oks_ap_ar");
  check_last(pred, 2, 2, "oks_ap_ar");
  const std::size_t joints = pred.shape()[pred.rank() - 2];
  const std::size_t poses = pred.size() / (joints * 2);
  std::vector<double> values;
  for (std::size_t n = 0; n < poses; ++n) {
    auto slice = [&](const Tensor<double>& t) {
      return Tensor<double>({joints, 2}, std::vector<double>(t.data().begin() + n * joints * 2,
                                                             t.data().begin() + (n + 1) * joints * 2));
    };
    values.push_back(oks(slice(pred), slice(gt), sigmas));
  }
  return oks_ap_ar(values, thresholds);
}

Triangulation triangulate_dlt(const std::vector<Eigen::Vector2d>& obs, const std::vector<CameraModel>& cams) {
  if (obs.size() != cams.size()) throw DimensionError("triangulate_dlt: observation and camera counts differ");
  if (obs.size() < 2) throw ContractError("triangulate_dlt: need at least two views");
  const auto views = static_cast<Eigen::Index>(obs.size());
  Eigen::MatrixXd a(2 * views, 4);
  for (Eigen::Index v = 0; v < views; ++v) {
    const Eigen::Matrix<double, 3, 4> p = cams[static_cast<std::size_t>(v)].projection_matrix();
    const Eigen::Vector2d& uv = obs[static_cast<std::size_t>(v)];
    a.row(2 * v) = uv.x() * p.row(2) - p.row(0);
    a.row(2 * v + 1) = uv.y() * p.row(2) - p.row(1);
  }
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double n = a.row(r).norm();
    if (n > 0.0) a.row(r) /= n;
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto sv = svd.singularValues();
  if (!(sv[0] > 0.0) || sv[2] <= 1e-10 * sv[0]) {
    throw DegeneracyError("triangulate_dlt: rank-deficient system (parallel or identical rays)");
  }
  const Eigen::Vector4d x = svd.matrixV().col(3);
  if (std::abs(x[3]) <= 1e-12 * x.head<3>().norm()) {
    throw DegeneracyError("triangulate_dlt: solution at infinity");
  }
  Triangulation t;
  t.point = x.head<3>() / x[3];
  double sq = 0.0;
  for (std::size_t v = 0; v < obs.size(); ++v) {
    const Eigen::Vector3d c = cams[v].to_camera(t.point);
    if (c.z() > 0.0) {
      sq += (Eigen::Vector2d(cams[v].fx * c.x() / c.z() + cams[v].cx,
                             cams[v].fy * c.y() / c.z() + cams[v].cy) - obs[v]).squaredNorm();
    } else {
      sq = std::numeric_limits<double>::infinity();
    }
  }
  t.reprojection_rms = std::sqrt(sq / static_cast<double>(obs.size()));
  return t;
}

Tensor<double> triangulate_sequence(const Tensor<double>& pose2d, const std::vector<CameraModel>& cams) {
  const auto& s = pose2d.shape();
  if (s.size() != 4 || s[1] != cams.size() || s[3] != 2) {
    throw DimensionError("triangulate_sequence: pose " + shape_string(s) + " for " +
                         std::to_string(cams.size()) + " cameras");
  }
  Tensor<double> out({s[0], s[2], 3});
  std::vector<Eigen::Vector2d> obs(cams.size());
  for (std::size_t f = 0; f < s[0]; ++f) {
    for (std::size_t j = 0; j < s[2]; ++j) {
      for (std::size_t v = 0; v < cams.size(); ++v) {
        obs[v] = {pose2d(f, v, j, 0) * static_cast<double>(cams[v].width),
                  pose2d(f, v, j, 1) * static_cast<double>(cams[v].height)};
      }
      const Eigen::Vector3d p = triangulate_dlt(obs, cams).point;
      for (std::size_t a = 0; a < 3; ++a) out(f, j, a) = p[static_cast<Eigen::Index>(a)];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

MetricAccumulator::MetricAccumulator(MetricOptions options) : options_(std::move(options)) {
  if (!(options_.pck_alpha > 0.0)) throw ContractError("metrics: pck_alpha must be positive");
  if (!(options_.oks_sigma > 0.0)) throw ContractError("metrics: oks_sigma must be positive");
  oks_ap_ar(std::vector<double>{1.0}, options_.oks_thresholds);  // validates thresholds
}

void MetricAccumulator::add(const std::string& action, const Tensor<double>& pred2d,
                            const Tensor<double>& gt2d, const std::vector<CameraModel>* cams,
                            const Tensor<double>* gt3d) {
  same_shape(pred2d, gt2d, "metrics");
  if (pred2d.rank() != 4 || pred2d.shape()[3] != 2) {
    throw DimensionError("metrics: expected [f, V, J, 2], got " + shape_string(pred2d.shape()));
  }
  const std::size_t frames = pred2d.shape()[0], views = pred2d.shape()[1], joints = pred2d.shape()[2];
  Sums s;
  s.samples = 1;
  s.joints = frames * views * joints;
  s.hits = static_cast<std::size_t>(std::llround(pck(pred2d, gt2d, options_.pck_alpha) * static_cast<double>(s.joints)));
  s.coords = pred2d.size();
  s.sq = mse(pred2d, gt2d) * static_cast<double>(s.coords);
  for (std::size_t n = 0; n < frames * views; ++n) {
    auto slice = [&](const Tensor<double>& t) {
      return Tensor<double>({joints, 2}, std::vector<double>(t.data().begin() + n * joints * 2,
                                                             t.data().begin() + (n + 1) * joints * 2));
    };
    s.oks.push_back(oks(slice(pred2d), slice(gt2d), {options_.oks_sigma}));
  }
  s.all3d = cams && gt3d && views >= 2;
  if (s.all3d) {
    const Tensor<double> pred3d = triangulate_sequence(pred2d, *cams);
    if (gt3d->shape() != pred3d.shape()) {
      throw DimensionError("metrics: gt3d " + shape_string(gt3d->shape()) + " vs " + shape_string(pred3d.shape()));
    }
    const double n = static_cast<double>(frames * joints);
    s.frames3d = frames;
    s.joints3d = frames * joints;
    s.mpjpe = 1000.0 * mpjpe(pred3d, *gt3d, options_.root_centered) * n;
    s.p_mpjpe = 1000.0 * p_mpjpe(pred3d, *gt3d) * n;
  }
  merge(overall_, s);
  merge(per_action_[action], s);
}

void MetricAccumulator::merge(Sums& into, const Sums& s) {
  into.all3d = (into.samples == 0 ? s.all3d : into.all3d && s.all3d);
  into.samples += s.samples;
  into.joints += s.joints;
  into.hits += s.hits;
  into.coords += s.coords;
  into.sq += s.sq;
  into.frames3d += s.frames3d;
  into.joints3d += s.joints3d;
  into.mpjpe += s.mpjpe;
  into.p_mpjpe += s.p_mpjpe;
  into.oks.insert(into.oks.end(), s.oks.begin(), s.oks.end());
}

MetricValues MetricAccumulator::values(const Sums& s) const {
  MetricValues v;
  const ApAr apar = oks_ap_ar(s.oks, options_.oks_thresholds);
  v.ap = apar.ap;
  v.ar = apar.ar;
  v.pck = static_cast<double>(s.hits) / static_cast<double>(s.joints);
  v.mse = s.sq / static_cast<double>(s.coords);
  if (s.all3d && s.joints3d > 0) {
    v.mpjpe = s.mpjpe / static_cast<double>(s.joints3d);
    v.p_mpjpe = s.p_mpjpe / static_cast<double>(s.joints3d);
  }
  return v;
}

MetricReport MetricAccumulator::finish() const {
  if (overall_.samples == 0) throw ContractError("metrics: no samples accumulated");
  MetricReport r;
  r.options = options_;
  r.samples = overall_.samples;
  r.poses = overall_.oks.size();
  r.overall = values(overall_);
  for (const auto& [action, sums] : per_action_) r.per_action[action] = values(sums);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

json values_to_json(const MetricValues& v) {
  json j = {{"AP", v.ap}, {"AR", v.ar}, {"PCK", v.pck}, {"MSE", v.mse}};
  j["MPJPE"] = v.mpjpe ? json(*v.mpjpe) : json(nullptr);
  j["P-MPJPE"] = v.p_mpjpe ? json(*v.p_mpjpe) : json(nullptr);
  return j;
}

MetricValues values_from_json(const json& j) {
  MetricValues v;
  v.ap = j.at("AP").get<double>();
  v.ar = j.at("AR").get<double>();
  v.pck = j.at("PCK").get<double>();
  v.mse = j.at("MSE").get<double>();
  if (!j.at("MPJPE").is_null()) v.mpjpe = j.at("MPJPE").get<double>();
  if (!j.at("P-MPJPE").is_null()) v.p_mpjpe = j.at("P-MPJPE").get<double>();
  return v;
}

}  // namespace

std::string report_to_json(const MetricReport& r) {
  json per = json::object();
  for (const auto& [a, v] : r.per_action) per[a] = values_to_json(v);
  const json j = {
      {"schema_version", 1},
      {"options",
       {{"pck_alpha", r.options.pck_alpha},
        {"oks_sigma", r.options.oks_sigma},
        {"oks_thresholds", r.options.oks_thresholds},
        {"root_centered", r.options.root_centered}}},
      {"counts", {{"samples", r.samples}, {"poses", r.poses}}},
      {"units", {{"MPJPE", "mm"}, {"P-MPJPE", "mm"}, {"MSE", "normalized^2"}}},
      {"overall", values_to_json(r.overall)},
      {"per_action", per},
  };
  return j.dump(2);
}

MetricReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    MetricReport r;
    const json& o = j.at("options");
    r.options.pck_alpha = o.at("pck_alpha").get<double>();
    r.options.oks_sigma = o.at("oks_sigma").get<double>();
    r.options.oks_thresholds = o.at("oks_thresholds").get<std::vector<double>>();
    r.options.root_centered = o.at("root_centered").get<bool>();
    r.samples = j.at("counts").at("samples").get<std::size_t>();
    r.poses = j.at("counts").at("poses").get<std::size_t>();
    r.overall = values_from_json(j.at("overall"));
    for (const auto& [a, v] : j.at("per_action").items()) r.per_action[a] = values_from_json(v);
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("metric report: ") + e.what());
  }
}

std::string report_to_csv(const MetricReport& r, const std::vector<std::string>& actions) {
  using Getter = std::optional<double> (*)(const MetricValues&);
  const std::vector<std::pair<std::string, Getter>> rows = {
      {"AP", [](const MetricValues& v) -> std::optional<double> { return v.ap; }},
      {"AR", [](const MetricValues& v) -> std::optional<double> { return v.ar; }},
      {"PCK", [](const MetricValues& v) -> std::optional<double> { return v.pck; }},
      {"MSE", [](const MetricValues& v) -> std::optional<double> { return v.mse; }},
      {"MPJPE", [](const MetricValues& v) { return v.mpjpe; }},
      {"P-MPJPE", [](const MetricValues& v) { return v.p_mpjpe; }},
  };
  std::ostringstream out;
  out << std::setprecision(10);
  out << "metric";
  for (const auto& a : actions) out << ',' << a;
  out << ",Average\n";
  for (const auto& [name, get] : rows) {
    out << name;
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& a : actions) {
      out << ',';
      const auto it = r.per_action.find(a);
      if (it == r.per_action.end()) continue;
      const auto v = get(it->second);
      if (!v) continue;
      out << *v;
      sum += *v;
      ++count;
    }
    out << ',';
    if (count) out << sum / static_cast<double>(count);
    out << '\n';
  }
  return out.str();
}

}  // namespace stpose
