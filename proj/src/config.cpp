// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "stpose/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

#include "stpose/error.hpp"
#include "stpose/rng.hpp"

namespace stpose {

using json = nlohmann::json;

Precision parse_precision(const std::string& s) {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  throw ValidationError("precision must be f32 or f64, got '" + s + "'");
}

std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("config: " + m); };
  if (!(optimizer.lr > 0.0)) fail("optimizer.lr must be positive");
  if (!(optimizer.weight_decay >= 0.0)) fail("optimizer.weight_decay must be non-negative");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) fail("optimizer.beta1 must be in [0, 1)");
  if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) fail("optimizer.beta2 must be in [0, 1)");
  if (!(optimizer.eps > 0.0)) fail("optimizer.eps must be positive");
  if (optimizer.grad_accum < 1) fail("optimizer.grad_accum must be positive");
  if (schedule.epochs < 1) fail("schedule.epochs must be positive");
  if (schedule.warmup_epochs >= schedule.epochs) fail("schedule.warmup_epochs must be below schedule.epochs");
  if (data.train_samples < optimizer.grad_accum) fail("data.train_samples must be at least optimizer.grad_accum");
  if (data.frames > model.max_frames) fail("data.frames exceeds model.max_frames");
  try {
    train_data().validate();
    eval_data().validate();
    model_config().validate();
    MetricAccumulator check(metric_options());
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    fail(e.what());
  }
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  SpatialConfig& s = m.spatial;
  s.image_h = s.image_w = data.image_size;
  s.channels = 3;
  s.patch = model.patch;
  s.stage_depths = model.stage_depths;
  s.stage_dims = model.stage_dims;
  s.stage_heads = model.stage_heads;
  s.window = model.window;
  s.mlp_ratio = model.mlp_ratio;
  s.prune_keep_ratio = model.prune_keep_ratio;
  s.out_dim = model.token_dim;
  s.patch_pos_embed = model.patch_pos_embed;
  RelationConfig& r = m.relation;
  r.token_dim = model.token_dim;
  r.layers = model.relation_layers;
  r.heads = model.relation_heads;
  r.num_views = data.views;
  r.num_joints = data.joints;
  r.max_frames = model.max_frames;
  r.mlp_ratio = model.mlp_ratio;
  m.ablate_relations = ablate_relations;
  return m;
}

DatasetConfig RunConfig::train_data() const {
  DatasetConfig d;
  d.seed = data_seed();
  d.samples = data.train_samples;
  d.frames = data.frames;
  d.joints = data.joints;
  d.views = data.views;
  d.image_size = data.image_size;
  d.blob_sigma = data.blob_sigma;
  d.occlusion = data.occlusion_train;
  d.amplitude = data.amplitude;
  d.first_index = 0;
  return d;
}

DatasetConfig RunConfig::eval_data() const {
  if (data.eval_samples == 0) return train_data();
  DatasetConfig d = train_data();
  d.samples = data.eval_samples;
  d.occlusion = data.occlusion_eval;
  d.first_index = data.train_samples;
  return d;
}

MetricOptions RunConfig::metric_options() const {
  MetricOptions o;
  o.pck_alpha = eval.pck_alpha;
  o.oks_sigma = eval.oks_sigma;
  o.oks_thresholds = eval.oks_thresholds;
  o.root_centered = eval.root_centered;
  return o;
}

std::uint64_t RunConfig::init_seed() const { return derive_seed(seed, {0x696e6974ULL}); }
std::uint64_t RunConfig::data_seed() const { return seed; }

// ---------------------------------------------------------------------------

namespace {

// Reads fields from one JSON object and rejects anything left unread.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ParseError("config: '" + path_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ParseError("config: field '" + qualified(key) + "' has the wrong type");
    }
  }

  ObjectReader child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return ObjectReader(j_.contains(key) ? j_.at(key) : empty, qualified(key));
  }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.count(k)) throw ParseError("config: unknown field '" + qualified(k.c_str()) + "'");
    }
  }

 private:
  std::string qualified(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  RunConfig c;
  ObjectReader root(j, "");
  root.get("seed", c.seed);
  root.get("ablate_relations", c.ablate_relations);
  std::string precision = to_string(c.precision);
  root.get("precision", precision);
  c.precision = parse_precision(precision);

  ObjectReader m = root.child("model");
  m.get("patch", c.model.patch);
  m.get("stage_depths", c.model.stage_depths);
  m.get("stage_dims", c.model.stage_dims);
  m.get("stage_heads", c.model.stage_heads);
  m.get("window", c.model.window);
  m.get("mlp_ratio", c.model.mlp_ratio);
  m.get("prune_keep_ratio", c.model.prune_keep_ratio);
  m.get("patch_pos_embed", c.model.patch_pos_embed);
  m.get("token_dim", c.model.token_dim);
  m.get("relation_layers", c.model.relation_layers);
  m.get("relation_heads", c.model.relation_heads);
  m.get("max_frames", c.model.max_frames);
  m.finish();

  ObjectReader d = root.child("data");
  d.get("train_samples", c.data.train_samples);
  d.get("eval_samples", c.data.eval_samples);
  d.get("frames", c.data.frames);
  d.get("joints", c.data.joints);
  d.get("views", c.data.views);
  d.get("image_size", c.data.image_size);
  d.get("blob_sigma", c.data.blob_sigma);
  d.get("occlusion_train", c.data.occlusion_train);
  d.get("occlusion_eval", c.data.occlusion_eval);
  d.get("amplitude", c.data.amplitude);
  d.finish();

  ObjectReader o = root.child("optimizer");
  o.get("lr", c.optimizer.lr);
  o.get("weight_decay", c.optimizer.weight_decay);
  o.get("beta1", c.optimizer.beta1);
  o.get("beta2", c.optimizer.beta2);
  o.get("eps", c.optimizer.eps);
  o.get("grad_accum", c.optimizer.grad_accum);
  o.finish();

  ObjectReader s = root.child("schedule");
  s.get("epochs", c.schedule.epochs);
  s.get("warmup_epochs", c.schedule.warmup_epochs);
  s.get("checkpoint_every", c.schedule.checkpoint_every);
  s.finish();

  ObjectReader e = root.child("eval");
  e.get("pck_alpha", c.eval.pck_alpha);
  e.get("oks_sigma", c.eval.oks_sigma);
  e.get("oks_thresholds", c.eval.oks_thresholds);
  e.get("root_centered", c.eval.root_centered);
  e.get("every", c.eval.every);
  e.finish();

  root.finish();
  return c;
}

RunConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError(file.string() + ": cannot open config");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return config_from_json(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(file.string() + ": " + e.what());
  }
}

std::string config_to_json(const RunConfig& c) {
  const json j = {
      {"seed", c.seed},
      {"ablate_relations", c.ablate_relations},
      {"precision", to_string(c.precision)},
      {"model",
       {{"patch", c.model.patch},
        {"stage_depths", c.model.stage_depths},
        {"stage_dims", c.model.stage_dims},
        {"stage_heads", c.model.stage_heads},
        {"window", c.model.window},
        {"mlp_ratio", c.model.mlp_ratio},
        {"prune_keep_ratio", c.model.prune_keep_ratio},
        {"patch_pos_embed", c.model.patch_pos_embed},
        {"token_dim", c.model.token_dim},
        {"relation_layers", c.model.relation_layers},
        {"relation_heads", c.model.relation_heads},
        {"max_frames", c.model.max_frames}}},
      {"data",
       {{"train_samples", c.data.train_samples},
        {"eval_samples", c.data.eval_samples},
        {"frames", c.data.frames},
        {"joints", c.data.joints},
        {"views", c.data.views},
        {"image_size", c.data.image_size},
        {"blob_sigma", c.data.blob_sigma},
        {"occlusion_train", c.data.occlusion_train},
        {"occlusion_eval", c.data.occlusion_eval},
        {"amplitude", c.data.amplitude}}},
      {"optimizer",
       {{"lr", c.optimizer.lr},
        {"weight_decay", c.optimizer.weight_decay},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"eps", c.optimizer.eps},
        {"grad_accum", c.optimizer.grad_accum}}},
      {"schedule",
       {{"epochs", c.schedule.epochs},
        {"warmup_epochs", c.schedule.warmup_epochs},
        {"checkpoint_every", c.schedule.checkpoint_every}}},
      {"eval",
       {{"pck_alpha", c.eval.pck_alpha},
        {"oks_sigma", c.eval.oks_sigma},
        {"oks_thresholds", c.eval.oks_thresholds},
        {"root_centered", c.eval.root_centered},
        {"every", c.eval.every}}},
  };
  return j.dump(2);
}

std::uint64_t config_hash(const RunConfig& cfg) {
  const std::string s = json::parse(config_to_json(cfg)).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace stpose
