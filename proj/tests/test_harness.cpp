// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>
#include <sys/wait.h>

#include "stpose/checkpoint.hpp"
#include "stpose/config.hpp"
#include "stpose/error.hpp"
#include "stpose/optim.hpp"
#include "stpose/train.hpp"
#include "test_util.hpp"

namespace stpose {
namespace {

namespace fs = std::filesystem;
using testing::normal_tensor;
using testing::TempDir;

RunConfig tiny_config() {
  RunConfig c;
  c.seed = 3;
  c.precision = Precision::f64;
  c.model.patch = 4;
  c.model.stage_depths = {1, 1};
  c.model.stage_dims = {8, 16};
  c.model.stage_heads = {1, 2};
  c.model.window = 2;
  c.model.mlp_ratio = 2;
  c.model.token_dim = 16;
  c.model.relation_layers = 1;
  c.model.relation_heads = 2;
  c.model.max_frames = 8;
  c.data.train_samples = 2;
  c.data.eval_samples = 1;
  c.data.frames = 2;
  c.data.joints = 4;
  c.data.views = 2;
  c.data.image_size = 8;
  c.data.blob_sigma = 1.0;
  c.optimizer.lr = 1e-2;
  c.schedule.epochs = 4;
  c.schedule.warmup_epochs = 1;
  c.schedule.checkpoint_every = 2;
  c.eval.every = 0;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------
// optimizer

TEST(AdamW, FirstStepMovesByLearningRate) {
  Tensor<double> p({2}), m({2}), v({2});
  p[0] = 1.0;
  p[1] = -2.0;
  Tensor<double> g({2});
  g[0] = 0.5;
  g[1] = -3.0;
  adamw_step(p, g, m, v, 1, 0.1, 0.0);
  EXPECT_NEAR(p[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], -2.0 + 0.1 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_NEAR(m[0], 0.05, 1e-15);
  EXPECT_NEAR(v[1], 0.001 * 9.0, 1e-15);
}

TEST(AdamW, DecoupledWeightDecayWithZeroGradient) {
  Tensor<double> p({1}, 2.0), g({1}), m({1}), v({1});
  adamw_step(p, g, m, v, 1, 0.1, 0.5);
  EXPECT_NEAR(p[0], 2.0 * (1.0 - 0.05), 1e-15);
}

TEST(AdamW, MatchesTenStepTranscription) {
  const AdamWHyper h{0.8, 0.95, 1e-6};
  Tensor<double> p = normal_tensor({5}, 1, 1.0);
  Tensor<double> m({5}), v({5});
  std::vector<double> rp(p.data().begin(), p.data().end()), rm(5, 0.0), rv(5, 0.0);
  const double lr = 0.03, wd = 0.1;
  for (std::uint64_t t = 1; t <= 10; ++t) {
    const Tensor<double> g = normal_tensor({5}, 100 + t, 1.0);
    adamw_step(p, g, m, v, t, lr, wd, h);
    for (std::size_t i = 0; i < 5; ++i) {
      rp[i] -= lr * wd * rp[i];
      rm[i] = h.beta1 * rm[i] + (1 - h.beta1) * g[i];
      rv[i] = h.beta2 * rv[i] + (1 - h.beta2) * g[i] * g[i];
      const double mh = rm[i] / (1 - std::pow(h.beta1, t)), vh = rv[i] / (1 - std::pow(h.beta2, t));
      rp[i] -= lr * mh / (std::sqrt(vh) + h.eps);
    }
  }
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(p[i], rp[i], 1e-12);
    EXPECT_NEAR(m[i], rm[i], 1e-12);
    EXPECT_NEAR(v[i], rv[i], 1e-12);
  }
}

TEST(AdamW, ZeroLearningRateLeavesParamsUnchanged) {
  ParamStore<double> params;
  params.add("a", normal_tensor({3, 2}, 1, 1.0));
  params.add("b", normal_tensor({4}, 2, 1.0));
  const ParamStore<double> before = params;
  AdamState<double> st = AdamState<double>::zeros_like(params);
  GradMap<double> grads;
  grads.emplace("a", normal_tensor({3, 2}, 3, 1.0));
  adamw_step(params, grads, st, 0.0, 0.05);
  EXPECT_TRUE(params == before);
  EXPECT_EQ(st.t, 1u);
}

TEST(AdamW, RejectsUnknownGradientAndBadStep) {
  ParamStore<double> params;
  params.add("a", Tensor<double>({2}));
  AdamState<double> st = AdamState<double>::zeros_like(params);
  GradMap<double> grads;
  grads.emplace("zz", Tensor<double>({2}));
  EXPECT_THROW(adamw_step(params, grads, st, 0.1, 0.0), ContractError);
  Tensor<double> p({2}), g({2}), m({2}), v({2});
  EXPECT_THROW(adamw_step(p, g, m, v, 0, 0.1, 0.0), ContractError);
}

TEST(LrSchedule, Examples) {
  EXPECT_EQ(lr_schedule(0.0, 0.2, 1e-3), 0.0);
  EXPECT_NEAR(lr_schedule(0.1, 0.2, 1e-3), 5e-4, 1e-18);
  EXPECT_NEAR(lr_schedule(0.2, 0.2, 1e-3), 1e-3, 1e-18);
  EXPECT_NEAR(lr_schedule(0.6, 0.2, 1e-3), 5e-4, 1e-15);
  EXPECT_NEAR(lr_schedule(1.0, 0.2, 1e-3), 0.0, 1e-18);
  EXPECT_NEAR(lr_schedule(0.5, 0.0, 2.0), 1.0, 1e-15);
  EXPECT_THROW(lr_schedule(0.5, 1.0, 1.0), ContractError);
  EXPECT_THROW(lr_schedule(1.5, 0.2, 1.0), ContractError);
}

TEST(LrSchedule, ContinuousAndUnimodal) {
  const double w = 0.3;
  EXPECT_NEAR(lr_schedule(w - 1e-9, w, 1.0), lr_schedule(w, w, 1.0), 1e-8);
  double prev = -1.0;
  for (int i = 0; i <= 1000; ++i) {
    const double e = i / 1000.0, lr = lr_schedule(e, w, 1.0);
    EXPECT_GE(lr, 0.0);
    EXPECT_LE(lr, 1.0 + 1e-15);
    if (e <= w) EXPECT_GE(lr, prev);
    if (e > w) EXPECT_LE(lr, prev + 1e-15);
    prev = lr;
  }
}

// ---------------------------------------------------------------------------
// config

TEST(Config, JsonRoundTripKeepsHash) {
  const RunConfig c = tiny_config();
  const RunConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  RunConfig other = c;
  other.optimizer.lr *= 2;
  EXPECT_NE(config_hash(other), config_hash(c));
}

TEST(Config, UnknownKeysAreRejected) {
  EXPECT_THROW(config_from_json(R"({"seed": 1, "learning_rate": 0.1})"), ParseError);
  EXPECT_THROW(config_from_json(R"({"model": {"patch": 4, "depth": 2}})"), ParseError);
  EXPECT_THROW(config_from_json(R"({"seed": "one"})"), ParseError);
  EXPECT_THROW(config_from_json("{not json"), ParseError);
  try {
    config_from_json(R"({"optimizer": {"lrate": 1}})");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("optimizer.lrate"), std::string::npos);
  }
}

TEST(Config, PartialJsonKeepsDefaults) {
  const RunConfig c = config_from_json(R"({"seed": 9, "data": {"frames": 4}})");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.data.frames, 4u);
  EXPECT_EQ(c.data.views, RunConfig{}.data.views);
}

TEST(Config, ValidationErrors) {
  RunConfig c = tiny_config();
  c.optimizer.lr = 0.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = tiny_config();
  c.schedule.warmup_epochs = c.schedule.epochs;
  EXPECT_THROW(c.validate(), ValidationError);
  c = tiny_config();
  c.data.frames = 9;
  EXPECT_THROW(c.validate(), ValidationError);
  c = tiny_config();
  c.model.patch = 3;
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_THROW(parse_precision("f16"), ValidationError);
  EXPECT_NO_THROW(tiny_config().validate());
}

TEST(Config, ShippedOverfitConfigLoads) {
  const RunConfig c = load_config(fs::path(STPOSE_SOURCE_DIR) / "configs" / "overfit.json");
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.data.train_samples, 8u);
  EXPECT_EQ(c.data.frames, 8u);
  EXPECT_EQ(c.data.views, 4u);
  EXPECT_EQ(c.data.joints, 17u);
  EXPECT_EQ(c.data.image_size, 64u);
}

// ---------------------------------------------------------------------------
// checkpoints

template <typename T>
TrainState<T> random_state(const RunConfig& cfg) {
  TrainState<T> st;
  st.params = init_params(cfg.model_config(), 5).template cast<T>();
  st.opt = AdamState<T>::zeros_like(st.params);
  std::uint64_t k = 0;
  for (auto* store : {&st.opt.m, &st.opt.v}) {
    for (auto& [name, t] : store->entries()) {
      const Tensor<double> r = normal_tensor(t.shape(), ++k, 0.1);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(std::abs(r[i]));
    }
  }
  st.opt.t = 17;
  st.epoch = 3;
  st.step = 17;
  return st;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir("ckpt");
  RunConfig cfg = tiny_config();
  const TrainState<double> s64 = random_state<double>(cfg);
  save_checkpoint(dir.path() / "d", cfg, s64);
  CheckpointInfo info;
  EXPECT_TRUE(load_checkpoint<double>(dir.path() / "d", &info) == s64);
  EXPECT_EQ(info.precision, Precision::f64);
  EXPECT_EQ(info.config_hash, config_hash(cfg));
  EXPECT_EQ(info.epoch, 3u);
  EXPECT_EQ(info.adam_t, 17u);

  cfg.precision = Precision::f32;
  const TrainState<float> s32 = random_state<float>(cfg);
  save_checkpoint(dir.path() / "f", cfg, s32);
  EXPECT_TRUE(load_checkpoint<float>(dir.path() / "f") == s32);
  EXPECT_EQ(fs::file_size(dir.path() / "f" / "payload.bin") * 2, fs::file_size(dir.path() / "d" / "payload.bin"));
  EXPECT_THROW(load_checkpoint<double>(dir.path() / "f"), ValidationError);

  save_checkpoint(dir.path() / "d2", tiny_config(), s64);
  EXPECT_EQ(slurp(dir.path() / "d" / "payload.bin"), slurp(dir.path() / "d2" / "payload.bin"));
  EXPECT_NE(describe_checkpoint(info).find("f64"), std::string::npos);
}

TEST(Checkpoint, CorruptionIsReported) {
  TempDir dir("ckpt_bad");
  const RunConfig cfg = tiny_config();
  save_checkpoint(dir.path(), cfg, random_state<double>(cfg));
  fs::resize_file(dir.path() / "payload.bin", fs::file_size(dir.path() / "payload.bin") - 8);
  EXPECT_THROW(load_checkpoint<double>(dir.path()), ParseError);
  auto j = nlohmann::json::parse(slurp(dir.path() / "manifest.json"));
  j["config"]["seed"] = 999;
  std::ofstream(dir.path() / "manifest.json") << j.dump();
  EXPECT_THROW(read_checkpoint_info(dir.path()), ParseError);
  EXPECT_THROW(read_checkpoint_info(dir.path() / "missing"), ParseError);
}

// ---------------------------------------------------------------------------
// training, resume and evaluation

TEST(Train, ResumeIsBitExactInDoublePrecision) {
  TempDir dir("resume");
  const RunConfig cfg = tiny_config();
  const Splits data = make_splits(cfg);

  TrainOptions full;
  full.out_dir = dir.path() / "full";
  const TrainResult a = train(cfg, data, full);
  ASSERT_EQ(a.steps_done, 8u);
  ASSERT_TRUE(a.report.has_value());

  TrainOptions first;
  first.out_dir = dir.path() / "split";
  first.stop_after_epochs = 2;
  const TrainResult b1 = train(cfg, data, first);
  EXPECT_FALSE(b1.report.has_value());
  EXPECT_EQ(b1.steps_done, 4u);
  TrainOptions second = first;
  second.stop_after_epochs = 0;
  second.resume = b1.final_checkpoint;
  const TrainResult b2 = train(cfg, data, second);
  ASSERT_EQ(b2.step_losses.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(b2.step_losses[i], a.step_losses[4 + i]);

  EXPECT_TRUE(load_checkpoint<double>(a.final_checkpoint) == load_checkpoint<double>(b2.final_checkpoint));
  EXPECT_EQ(slurp(full.out_dir / "loss.csv"), slurp(first.out_dir / "loss.csv"));
  EXPECT_EQ(slurp(full.out_dir / "epochs.csv"), slurp(first.out_dir / "epochs.csv"));
  EXPECT_EQ(report_to_json(*a.report), report_to_json(*b2.report));
}

TEST(Train, ResumeWithDifferentConfigFails) {
  TempDir dir("resume_bad");
  RunConfig cfg = tiny_config();
  const Splits data = make_splits(cfg);
  TrainOptions o;
  o.out_dir = dir.path();
  o.stop_after_epochs = 1;
  const TrainResult r = train(cfg, data, o);
  cfg.optimizer.lr = 0.5;
  o.resume = r.final_checkpoint;
  o.stop_after_epochs = 0;
  EXPECT_THROW(train(cfg, data, o), ValidationError);
}

TEST(Train, RepeatedRunsAreIdentical) {
  TempDir dir("repeat");
  RunConfig cfg = tiny_config();
  cfg.precision = Precision::f32;
  cfg.schedule.epochs = 2;
  const Splits data = make_splits(cfg);
  TrainOptions o1, o2;
  o1.out_dir = dir.path() / "a";
  o2.out_dir = dir.path() / "b";
  const TrainResult a = train(cfg, data, o1), b = train(cfg, data, o2);
  EXPECT_EQ(a.step_losses, b.step_losses);
  EXPECT_EQ(slurp(a.final_checkpoint / "payload.bin"), slurp(b.final_checkpoint / "payload.bin"));
}

TEST(Train, MismatchedDatasetIsValidationError) {
  const RunConfig cfg = tiny_config();
  RunConfig other = cfg;
  other.data.frames = 3;
  Splits data = make_splits(cfg);
  data.train = make_splits(other).train;
  TempDir dir("mismatch");
  TrainOptions o;
  o.out_dir = dir.path();
  EXPECT_THROW(train(cfg, data, o), ValidationError);
  EXPECT_THROW(check_dataset_matches(cfg, make_splits(other).eval, "eval"), ValidationError);
  EXPECT_NO_THROW(check_dataset_matches(cfg, make_splits(cfg).eval, "eval"));
}

TEST(Splits, DiskRoundTripMatchesMemory) {
  TempDir dir("splits");
  const RunConfig cfg = tiny_config();
  write_splits(cfg, dir.path());
  const Splits disk = load_splits(cfg, dir.path());
  const Splits mem = make_splits(cfg);
  ASSERT_EQ(disk.train.samples.size(), 2u);
  ASSERT_EQ(disk.eval.samples.size(), 1u);
  EXPECT_LT(max_abs_diff(disk.eval.samples[0].pose2d, mem.eval.samples[0].pose2d), 1e-6);
  RunConfig other = cfg;
  other.data.views = 3;
  EXPECT_THROW(load_splits(other, dir.path()), ValidationError);
}

TEST(Evaluate, GroundTruthBypassIsPerfect) {
  const RunConfig cfg = tiny_config();
  const ParamStore<double> params = init_params(cfg.model_config(), 1);
  const Splits data = make_splits(cfg);
  const MetricReport r = evaluate_params(cfg, params, data.eval.samples, true);
  EXPECT_EQ(r.overall.pck, 1.0);
  EXPECT_EQ(r.overall.mse, 0.0);
  EXPECT_EQ(r.overall.ap, 1.0);
  ASSERT_TRUE(r.overall.mpjpe.has_value());
  EXPECT_LT(*r.overall.mpjpe, 1e-6);
}

TEST(Evaluate, DeterministicAndMatchesCheckpoint) {
  TempDir dir("eval");
  RunConfig cfg = tiny_config();
  cfg.schedule.epochs = 2;
  const Splits data = make_splits(cfg);
  TrainOptions o;
  o.out_dir = dir.path();
  const TrainResult r = train(cfg, data, o);
  const MetricReport a = evaluate_checkpoint(r.final_checkpoint, data.eval);
  const MetricReport b = evaluate_checkpoint(r.final_checkpoint, data.eval);
  EXPECT_EQ(report_to_json(a), report_to_json(b));
  EXPECT_EQ(report_to_json(a), report_to_json(*r.report));
  EXPECT_TRUE(fs::exists(dir.path() / "metrics.json"));
  EXPECT_TRUE(fs::exists(dir.path() / "actions.csv"));
}

TEST(FrameStudy, OneRowPerLengthAveragedOverSeeds) {
  TempDir dir("study");
  RunConfig cfg = tiny_config();
  cfg.schedule.epochs = 2;
  const auto rows = frame_length_study(cfg, {1, 2}, {0, 1}, dir.path());
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].frames, 1u);
  EXPECT_EQ(rows[1].frames, 2u);
  for (const auto& row : rows) {
    ASSERT_EQ(row.per_seed.size(), 2u);
    EXPECT_NEAR(row.mean.pck, (row.per_seed[0].pck + row.per_seed[1].pck) / 2.0, 1e-12);
    EXPECT_NEAR(row.mean.mse, (row.per_seed[0].mse + row.per_seed[1].mse) / 2.0, 1e-12);
  }
  std::ifstream table(dir.path() / "frame_study.csv");
  std::size_t lines = 0;
  for (std::string l; std::getline(table, l);) ++lines;
  EXPECT_EQ(lines, 3u);
  EXPECT_THROW(frame_length_study(cfg, {}, {0}, dir.path()), ValidationError);
}

TEST(GradCheck, DefaultConfigPassesWithSampledEntries) {
  const GradCheckRun r = run_gradcheck(gradcheck_config(), 3);
  EXPECT_GT(r.tensors, 10u);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

// ---------------------------------------------------------------------------
// command line

int run_cli(const std::string& args) {
  const std::string cmd = std::string(STPOSE_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_config(const fs::path& p, const RunConfig& c) { std::ofstream(p) << config_to_json(c); }

TEST(Cli, ExitCodes) {
  TempDir dir("cli");
  const fs::path cfg = dir.path() / "tiny.json";
  RunConfig c = tiny_config();
  c.schedule.epochs = 2;
  write_config(cfg, c);
  const std::string d = dir.path().string();

  EXPECT_EQ(run_cli("gen-data --config " + cfg.string() + " --out " + d + "/data"), 0);
  EXPECT_EQ(run_cli("train --config " + cfg.string() + " --data " + d + "/data --out " + d + "/run"), 0);
  EXPECT_EQ(run_cli("eval --checkpoint " + d + "/run/final --data " + d + "/data --out " + d + "/ev"), 0);
  EXPECT_TRUE(fs::exists(dir.path() / "ev" / "metrics.json"));
  EXPECT_EQ(run_cli("inspect-checkpoint " + d + "/run/final"), 0);
  EXPECT_EQ(run_cli("train --config " + cfg.string() + " --out " + d + "/run2 --precision f32 --seed 4"), 0);
  EXPECT_EQ(run_cli("train --config " + cfg.string() + " --out " + d + "/run3 --ablate-relations --frames 1"), 0);

  // validation failures
  EXPECT_EQ(run_cli("train --config " + cfg.string() + " --out " + d + "/x --precision f16"), 2);
  EXPECT_EQ(run_cli("train --config " + cfg.string() + " --out " + d + "/x --frames 99"), 2);
  EXPECT_EQ(run_cli("train --config " + d + "/nope.json --out " + d + "/x"), 2);
  EXPECT_EQ(run_cli("bogus"), 2);
  std::ofstream(dir.path() / "bad.json") << R"({"seed": 1, "unknown": 2})";
  EXPECT_EQ(run_cli("train --config " + d + "/bad.json --out " + d + "/x"), 2);
  EXPECT_EQ(run_cli("train --config " + cfg.string() + " --frames 1 --data " + d + "/data --out " + d + "/x"), 2);

  // numeric blow-up
  RunConfig hot = c;
  hot.precision = Precision::f32;
  hot.optimizer.lr = 1e38;
  write_config(dir.path() / "hot.json", hot);
  EXPECT_EQ(run_cli("train --config " + d + "/hot.json --out " + d + "/hot"), 3);

  // gradient check against an impossible tolerance
  EXPECT_EQ(run_cli("gradcheck --max-entries 3 --tol 0"), 4);
  EXPECT_EQ(run_cli("gradcheck --max-entries 3 --tol 1e-4"), 0);
}

TEST(Cli, ResumeMatchesUninterruptedRun) {
  TempDir dir("cli_resume");
  const fs::path cfg = dir.path() / "tiny.json";
  write_config(cfg, tiny_config());
  const std::string d = dir.path().string(), base = "train --config " + cfg.string();
  ASSERT_EQ(run_cli(base + " --out " + d + "/a"), 0);
  ASSERT_EQ(run_cli(base + " --out " + d + "/b --stop-after-epochs 2"), 0);
  ASSERT_EQ(run_cli(base + " --out " + d + "/b --resume " + d + "/b/ckpt_epoch_0002"), 0);
  EXPECT_EQ(slurp(dir.path() / "a" / "final" / "payload.bin"), slurp(dir.path() / "b" / "final" / "payload.bin"));
  EXPECT_EQ(slurp(dir.path() / "a" / "metrics.json"), slurp(dir.path() / "b" / "metrics.json"));
}

}  // namespace
}  // namespace stpose
