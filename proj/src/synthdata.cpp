// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "stpose/synthdata.hpp"

#include <Eigen/Geometry>
#include <json.hpp>

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "stpose/error.hpp"
#include "stpose/rng.hpp"

static_assert(std::endian::native == std::endian::little, "payload I/O assumes a little-endian host");

namespace stpose {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Rest offsets from the parent joint in metres; x left, y forward, z up.
const std::array<Eigen::Vector3d, kMaxJoints> kRestOffsets = {{
    {0.0, 0.0, 0.0},       // pelvis
    {-0.13, 0.0, 0.0},     // right hip
    {0.0, 0.0, -0.45},     // right knee
    {0.0, 0.0, -0.44},     // right ankle
    {0.13, 0.0, 0.0},      // left hip
    {0.0, 0.0, -0.45},     // left knee
    {0.0, 0.0, -0.44},     // left ankle
    {0.0, 0.0, 0.24},      // spine
    {0.0, 0.0, 0.25},      // thorax
    {0.0, 0.03, 0.11},     // neck
    {0.0, 0.0, 0.12},      // head
    {0.16, 0.0, 0.0},      // left shoulder
    {0.06, 0.0, -0.27},    // left elbow
    {0.03, 0.0, -0.25},    // left wrist
    {-0.16, 0.0, 0.0},     // right shoulder
    {-0.06, 0.0, -0.27},   // right elbow
    {-0.03, 0.0, -0.25},   // right wrist
}};

// Joint-angle swing per axis (x flexion, y abduction, z twist), radians.
const std::array<Eigen::Vector3d, kMaxJoints> kSwing = {{
    {0.05, 0.05, 0.0},
    {0.45, 0.15, 0.1},
    {0.55, 0.0, 0.0},
    {0.0, 0.0, 0.0},
    {0.45, 0.15, 0.1},
    {0.55, 0.0, 0.0},
    {0.0, 0.0, 0.0},
    {0.15, 0.1, 0.15},
    {0.1, 0.1, 0.1},
    {0.25, 0.2, 0.2},
    {0.0, 0.0, 0.0},
    {0.7, 0.4, 0.2},
    {0.7, 0.0, 0.0},
    {0.0, 0.0, 0.0},
    {0.7, 0.4, 0.2},
    {0.7, 0.0, 0.0},
    {0.0, 0.0, 0.0},
}};

constexpr double kPelvisHeight = 0.95;

Eigen::Matrix3d euler_xyz(const Eigen::Vector3d& a) {
  return (Eigen::AngleAxisd(a.z(), Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(a.y(), Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(a.x(), Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

struct MotionDraw {
  double scale, yaw0;
  std::array<Eigen::Vector3d, kMaxJoints> phase, freq_mult;
  std::array<double, 5> root_phase;
};

MotionDraw draw_motion(std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, {0x6d6f74696f6eULL}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MotionDraw d;
  d.scale = 0.9 + 0.2 * unit(rng);
  d.yaw0 = kTwoPi * unit(rng);
  for (std::size_t j = 0; j < kMaxJoints; ++j) {
    for (int a = 0; a < 3; ++a) {
      d.phase[j][a] = kTwoPi * unit(rng);
      d.freq_mult[j][a] = 0.7 + 0.6 * unit(rng);
    }
  }
  for (double& p : d.root_phase) p = kTwoPi * unit(rng);
  return d;
}

}  // namespace

const std::vector<int>& skeleton_parents() {
  static const std::vector<int> parents = {-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15};
  return parents;
}

const std::vector<std::string>& joint_names() {
  static const std::vector<std::string> names = {
      "pelvis", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle", "spine", "thorax",
      "neck", "head", "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist"};
  return names;
}

int joint_group(std::size_t joint) {
  static const std::array<int, kMaxJoints> group = {0, 1, 1, 1, 2, 2, 2, 0, 0, 0, 0, 2, 2, 2, 1, 1, 1};
  if (joint >= kMaxJoints) throw ContractError("joint_group: joint index out of range");
  return group[joint];
}

const std::vector<std::string>& action_labels() {
  static const std::vector<std::string> labels = {
      "Directions", "Discussion", "Eating", "Greeting", "Phoning", "Photo", "Posing", "Purchases",
      "Sitting", "SittingDown", "Smoking", "Waiting", "WalkDog", "Walking", "WalkTogether"};
  return labels;
}

MotionParams action_motion(std::size_t action) {
  MotionParams m;
  m.amplitude = 0.6 + 0.08 * static_cast<double>(action % 6);
  m.frequency = 0.5 + 0.15 * static_cast<double>(action % 5);
  m.root_drift = 0.05 + 0.02 * static_cast<double>(action % 4);
  return m;
}

Tensor<double> SkeletonSequence::bone_lengths() const {
  Tensor<double> out({frames, joints});
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < joints; ++j) {
      if (parents[j] < 0) continue;
      const auto p = static_cast<std::size_t>(parents[j]);
      double s = 0.0;
      for (std::size_t a = 0; a < 3; ++a) {
        const double d = positions(t, j, a) - positions(t, p, a);
        s += d * d;
      }
      out(t, j) = std::sqrt(s);
    }
  }
  return out;
}

SkeletonSequence make_sequence(std::uint64_t seed, std::size_t frames, std::size_t joints,
                               const MotionParams& motion, double fps) {
  if (joints < 2 || joints > kMaxJoints) {
    throw ContractError("make_sequence: joint count must be in [2, 17], got " + std::to_string(joints));
  }
  if (frames < 1) throw ContractError("make_sequence: need at least one frame");
  if (!(fps > 0.0)) throw ContractError("make_sequence: fps must be positive");

  const MotionDraw d = draw_motion(seed);
  const auto& parents = skeleton_parents();
  SkeletonSequence seq;
  seq.joints = joints;
  seq.frames = frames;
  seq.fps = fps;
  seq.parents.assign(parents.begin(), parents.begin() + static_cast<std::ptrdiff_t>(joints));
  seq.positions = Tensor<double>({frames, joints, 3});

  const double amp = motion.amplitude;
  for (std::size_t t = 0; t < frames; ++t) {
    const double time = static_cast<double>(t) / fps;
    const double w = kTwoPi * motion.frequency * time;
    std::array<Eigen::Matrix3d, kMaxJoints> global;
    std::array<Eigen::Vector3d, kMaxJoints> pos;
    for (std::size_t j = 0; j < joints; ++j) {
      Eigen::Vector3d angles;
      for (int a = 0; a < 3; ++a) {
        angles[a] = amp * kSwing[j][a] * std::sin(d.freq_mult[j][a] * w + d.phase[j][a]);
      }
      const Eigen::Matrix3d local = euler_xyz(angles);
      if (parents[j] < 0) {
        const double yaw = d.yaw0 + 0.3 * amp * std::sin(0.5 * w + d.root_phase[0]);
        global[j] = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix() * local;
        pos[j] = {motion.root_drift * std::sin(0.6 * w + d.root_phase[1]),
                  motion.root_drift * std::sin(0.4 * w + d.root_phase[2]),
                  d.scale * kPelvisHeight + 0.03 * amp * std::sin(w + d.root_phase[3])};
      } else {
        const auto p = static_cast<std::size_t>(parents[j]);
        pos[j] = pos[p] + global[p] * (d.scale * kRestOffsets[j]);
        global[j] = global[p] * local;
      }
      for (int a = 0; a < 3; ++a) seq.positions(t, j, static_cast<std::size_t>(a)) = pos[j][a];
    }
  }
  return seq;
}

Tensor<double> project_sequence(const SkeletonSequence& seq, const std::vector<CameraModel>& cams) {
  Tensor<double> out({seq.frames, cams.size(), seq.joints, 2});
  for (std::size_t t = 0; t < seq.frames; ++t) {
    for (std::size_t v = 0; v < cams.size(); ++v) {
      const CameraModel& cam = cams[v];
      for (std::size_t j = 0; j < seq.joints; ++j) {
        const Eigen::Vector3d x(seq.positions(t, j, 0), seq.positions(t, j, 1), seq.positions(t, j, 2));
        const Eigen::Vector2d uv = project(x, cam);
        out(t, v, j, 0) = uv.x() / static_cast<double>(cam.width);
        out(t, v, j, 1) = uv.y() / static_cast<double>(cam.height);
      }
    }
  }
  return out;
}

Tensor<float> render_image(const Tensor<double>& pose2d, std::size_t height, std::size_t width,
                           double blob_sigma, const std::vector<bool>& visible) {
  if (height == 0 || width == 0) throw DimensionError("render_image: empty image size");
  if (!(blob_sigma > 0.0)) throw ContractError("render_image: blob sigma must be positive");
  std::vector<double> acc(height * width * 3, 0.0);
  if (!pose2d.empty()) {
    const auto& s = pose2d.shape();
    if (s.size() != 2 || s[1] != 2) throw DimensionError("render_image: pose " + shape_string(s));
    if (!visible.empty() && visible.size() != s[0]) {
      throw DimensionError("render_image: visibility mask length differs from joint count");
    }
    const double inv = 1.0 / (2.0 * blob_sigma * blob_sigma);
    const double reach = 5.0 * blob_sigma;
    for (std::size_t j = 0; j < s[0]; ++j) {
      if (!visible.empty() && !visible[j]) continue;
      const double cx = pose2d(j, 0) * static_cast<double>(width);
      const double cy = pose2d(j, 1) * static_cast<double>(height);
      const auto ch = static_cast<std::size_t>(joint_group(j % kMaxJoints));
      const auto lo = [](double c) { return static_cast<long>(std::max(0.0, std::ceil(c))); };
      const long r0 = lo(cy - reach), r1 = std::min<long>(static_cast<long>(height) - 1, static_cast<long>(std::floor(cy + reach)));
      const long c0 = lo(cx - reach), c1 = std::min<long>(static_cast<long>(width) - 1, static_cast<long>(std::floor(cx + reach)));
      for (long r = r0; r <= r1; ++r) {
        const double dy = static_cast<double>(r) - cy;
        for (long c = c0; c <= c1; ++c) {
          const double dx = static_cast<double>(c) - cx;
          acc[(static_cast<std::size_t>(r) * width + static_cast<std::size_t>(c)) * 3 + ch] +=
              std::exp(-(dx * dx + dy * dy) * inv);
        }
      }
    }
  }
  std::vector<float> px(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) px[i] = static_cast<float>(std::min(1.0, acc[i]));
  return Tensor<float>({height, width, 3}, std::move(px));
}

void DatasetConfig::validate() const {
  if (samples < 1) throw ValidationError("dataset: samples must be positive");
  if (frames < 1) throw ValidationError("dataset: frames must be positive");
  if (joints < 2 || joints > kMaxJoints) throw ValidationError("dataset: joints must be in [2, 17]");
  if (views < 1) throw ValidationError("dataset: views must be positive");
  if (image_size < 1) throw ValidationError("dataset: image_size must be positive");
  if (!(blob_sigma > 0.0)) throw ValidationError("dataset: blob_sigma must be positive");
  if (!(occlusion >= 0.0 && occlusion <= 1.0)) throw ValidationError("dataset: occlusion must be in [0, 1]");
  if (!(amplitude >= 0.0)) throw ValidationError("dataset: amplitude must be non-negative");
}

PoseSequenceSample generate_sample(const DatasetConfig& cfg, std::size_t index) {
  cfg.validate();
  const std::size_t id = cfg.first_index + index;
  const std::size_t action = id % action_labels().size();
  PoseSequenceSample s;
  s.action = action_labels()[action];
  s.subject = "S" + std::to_string(1 + (id / action_labels().size()) % 7);
  MotionParams motion = action_motion(action);
  motion.amplitude *= cfg.amplitude;
  s.skeleton = make_sequence(derive_seed(cfg.seed, {id, 1}), cfg.frames, cfg.joints, motion);
  RigConfig rig;
  rig.views = cfg.views;
  s.cameras = default_rig(rig);
  s.pose2d = project_sequence(s.skeleton, s.cameras);

  const std::size_t n = cfg.image_size;
  std::mt19937_64 occ(derive_seed(cfg.seed, {id, 2}));
  std::bernoulli_distribution drop(cfg.occlusion);
  std::vector<float> px;
  px.reserve(cfg.frames * cfg.views * n * n * 3);
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    for (std::size_t v = 0; v < cfg.views; ++v) {
      Tensor<double> pose({cfg.joints, 2});
      std::vector<bool> visible(cfg.joints, true);
      for (std::size_t j = 0; j < cfg.joints; ++j) {
        pose(j, 0) = s.pose2d(t, v, j, 0);
        pose(j, 1) = s.pose2d(t, v, j, 1);
        if (cfg.occlusion > 0.0) visible[j] = !drop(occ);
      }
      const Tensor<float> img = render_image(pose, n, n, cfg.blob_sigma, visible);
      px.insert(px.end(), img.data().begin(), img.data().end());
    }
  }
  s.images = Tensor<float>({cfg.frames, cfg.views, n, n, 3}, std::move(px));
  return s;
}

std::vector<PoseSequenceSample> generate_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  std::vector<PoseSequenceSample> out;
  out.reserve(cfg.samples);
  for (std::size_t i = 0; i < cfg.samples; ++i) out.push_back(generate_sample(cfg, i));
  return out;
}

// ---------------------------------------------------------------------------
// On-disk layout

namespace {

fs::path shape_path(const fs::path& file) {
  fs::path p = file;
  p.replace_extension(".shape.json");
  return p;
}

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError(file.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(file.string() + ": " + e.what());
  }
}

void write_json(const fs::path& file, const json& j) {
  std::ofstream out(file);
  if (!out) throw ParseError(file.string() + ": cannot open for writing");
  out << j.dump(2) << '\n';
}

template <typename T>
T field(const json& j, const char* key, const fs::path& file) {
  if (!j.is_object() || !j.contains(key)) {
    throw ParseError(file.string() + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(file.string() + ": field '" + key + "' has the wrong type");
  }
}

json camera_to_json(const CameraModel& c) {
  json r = json::array();
  for (int i = 0; i < 3; ++i) r.push_back({c.rotation(i, 0), c.rotation(i, 1), c.rotation(i, 2)});
  return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy},
          {"width", c.width}, {"height", c.height}, {"rotation", r},
          {"translation", {c.translation.x(), c.translation.y(), c.translation.z()}}};
}

CameraModel camera_from_json(const json& j, const fs::path& file) {
  CameraModel c;
  c.fx = field<double>(j, "fx", file);
  c.fy = field<double>(j, "fy", file);
  c.cx = field<double>(j, "cx", file);
  c.cy = field<double>(j, "cy", file);
  c.width = field<std::size_t>(j, "width", file);
  c.height = field<std::size_t>(j, "height", file);
  const auto r = field<std::vector<std::vector<double>>>(j, "rotation", file);
  const auto t = field<std::vector<double>>(j, "translation", file);
  if (r.size() != 3 || t.size() != 3) throw ParseError(file.string() + ": field 'rotation' or 'translation' has wrong size");
  for (int i = 0; i < 3; ++i) {
    if (r[static_cast<std::size_t>(i)].size() != 3) throw ParseError(file.string() + ": field 'rotation' has wrong size");
    for (int k = 0; k < 3; ++k) c.rotation(i, k) = r[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    c.translation[i] = t[static_cast<std::size_t>(i)];
  }
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw ValidationError(file.string() + ": " + e.what());
  }
  return c;
}

void expect_shape(const Tensor<float>& t, const Shape& want, const fs::path& file) {
  if (t.shape() != want) {
    throw ValidationError(file.string() + ": extents " + shape_string(t.shape()) +
                          " disagree with manifest " + shape_string(want));
  }
}

std::string sample_dir(std::size_t i) {
  std::ostringstream s;
  s << "sample_";
  s.width(4);
  s.fill('0');
  s << i;
  return s.str();
}

}  // namespace

void write_tensor_f32(const fs::path& file, const Tensor<float>& t) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ParseError(file.string() + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(t.data().data()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
  if (!out) throw ParseError(file.string() + ": write failed");
  write_json(shape_path(file), json{{"dtype", "f32"}, {"shape", t.shape()}});
}

Tensor<float> read_tensor_f32(const fs::path& file) {
  if (!fs::exists(file)) throw ParseError(file.string() + ": missing tensor file");
  const fs::path sp = shape_path(file);
  if (!fs::exists(sp)) throw ParseError(sp.string() + ": missing shape sidecar");
  const json meta = read_json(sp);
  if (field<std::string>(meta, "dtype", sp) != "f32") throw ParseError(sp.string() + ": field 'dtype' must be f32");
  const auto shape = field<Shape>(meta, "shape", sp);
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  if (fs::file_size(file) != n * sizeof(float)) {
    throw ValidationError(file.string() + ": payload size disagrees with shape " + shape_string(shape));
  }
  std::vector<float> v(n);
  std::ifstream in(file, std::ios::binary);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw ParseError(file.string() + ": short read");
  return Tensor<float>(shape, std::move(v));
}

void write_dataset(const Dataset& data, const fs::path& dir) {
  const DatasetConfig& c = data.config;
  fs::create_directories(dir);
  json samples = json::array();
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const PoseSequenceSample& s = data.samples[i];
    const std::string name = sample_dir(i);
    const fs::path sd = dir / name;
    fs::create_directories(sd);
    write_tensor_f32(sd / "pose3d.bin", s.skeleton.positions.cast<float>());
    write_tensor_f32(sd / "pose2d.bin", s.pose2d.cast<float>());
    write_tensor_f32(sd / "images.bin", s.images);
    json cams = json::array();
    for (const auto& cam : s.cameras) cams.push_back(camera_to_json(cam));
    write_json(sd / "cameras.json", cams);
    samples.push_back({{"dir", name}, {"action", s.action}, {"subject", s.subject}});
  }
  const json manifest = {
      {"schema_version", 1},
      {"joints", c.joints},
      {"views", c.views},
      {"frames", c.frames},
      {"image_height", c.image_size},
      {"image_width", c.image_size},
      {"channels", 3},
      {"fps", data.samples.empty() ? 50.0 : data.samples.front().skeleton.fps},
      {"parents", std::vector<int>(skeleton_parents().begin(),
                                   skeleton_parents().begin() + static_cast<std::ptrdiff_t>(c.joints))},
      {"seed", c.seed},
      {"first_index", c.first_index},
      {"blob_sigma", c.blob_sigma},
      {"occlusion", c.occlusion},
      {"amplitude", c.amplitude},
      {"samples", samples},
  };
  write_json(dir / "manifest.json", manifest);
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path mf = dir / "manifest.json";
  if (!fs::exists(mf)) throw ParseError(mf.string() + ": missing manifest");
  const json m = read_json(mf);
  if (field<int>(m, "schema_version", mf) != 1) throw ParseError(mf.string() + ": field 'schema_version' unsupported");
  Dataset d;
  DatasetConfig& c = d.config;
  c.joints = field<std::size_t>(m, "joints", mf);
  c.views = field<std::size_t>(m, "views", mf);
  c.frames = field<std::size_t>(m, "frames", mf);
  c.image_size = field<std::size_t>(m, "image_height", mf);
  if (field<std::size_t>(m, "image_width", mf) != c.image_size) {
    throw ValidationError(mf.string() + ": field 'image_width' must equal image_height");
  }
  if (field<std::size_t>(m, "channels", mf) != 3) throw ValidationError(mf.string() + ": field 'channels' must be 3");
  const double fps = field<double>(m, "fps", mf);
  const auto parents = field<std::vector<int>>(m, "parents", mf);
  if (parents.size() != c.joints) throw ValidationError(mf.string() + ": field 'parents' length differs from joints");
  c.seed = field<std::uint64_t>(m, "seed", mf);
  c.first_index = field<std::size_t>(m, "first_index", mf);
  c.blob_sigma = field<double>(m, "blob_sigma", mf);
  c.occlusion = field<double>(m, "occlusion", mf);
  c.amplitude = field<double>(m, "amplitude", mf);
  const json samples = field<json>(m, "samples", mf);
  if (!samples.is_array()) throw ParseError(mf.string() + ": field 'samples' must be an array");
  c.samples = samples.size();
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(mf.string() + ": " + e.what());
  }

  const std::size_t f = c.frames, v = c.views, j = c.joints, n = c.image_size;
  for (const json& entry : samples) {
    PoseSequenceSample s;
    const fs::path sd = dir / field<std::string>(entry, "dir", mf);
    s.action = field<std::string>(entry, "action", mf);
    s.subject = field<std::string>(entry, "subject", mf);

    const fs::path p3 = sd / "pose3d.bin", p2 = sd / "pose2d.bin", pi = sd / "images.bin";
    const Tensor<float> pose3d = read_tensor_f32(p3);
    expect_shape(pose3d, {f, j, 3}, p3);
    const Tensor<float> pose2d = read_tensor_f32(p2);
    expect_shape(pose2d, {f, v, j, 2}, p2);
    s.images = read_tensor_f32(pi);
    expect_shape(s.images, {f, v, n, n, 3}, pi);

    s.skeleton.joints = j;
    s.skeleton.frames = f;
    s.skeleton.fps = fps;
    s.skeleton.parents = parents;
    s.skeleton.positions = pose3d.cast<double>();
    s.pose2d = pose2d.cast<double>();

    const fs::path cf = sd / "cameras.json";
    if (!fs::exists(cf)) throw ParseError(cf.string() + ": missing camera file");
    const json cams = read_json(cf);
    if (!cams.is_array() || cams.size() != v) {
      throw ValidationError(cf.string() + ": camera count disagrees with manifest views");
    }
    for (const json& cj : cams) s.cameras.push_back(camera_from_json(cj, cf));
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace stpose
