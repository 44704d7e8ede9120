// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "stpose/checkpoint.hpp"
#include "stpose/config.hpp"
#include "stpose/error.hpp"
#include "stpose/train.hpp"

namespace fs = std::filesystem;
using namespace stpose;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitGradcheck = 4;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::string> precision;
  std::optional<std::size_t> frames;
  bool ablate = false;
};

void add_common(CLI::App* app, CommonFlags& f, bool need_out) {
  app->add_option("--config", f.config, "Run config JSON")->check(CLI::ExistingFile);
  app->add_option("--seed", f.seed, "Seed for data, init and shuffling");
  auto* out = app->add_option("--out", f.out, "Output directory");
  if (need_out) out->required();
}

RunConfig resolve(const CommonFlags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.precision) cfg.precision = parse_precision(*f.precision);
  if (f.frames) cfg.data.frames = *f.frames;
  if (f.ablate) cfg.ablate_relations = true;
  cfg.validate();
  return cfg;
}

void print_log(const std::string& line) { std::cout << line << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stpose: multi-view spatio-temporal pose estimation toolkit"};
  app.require_subcommand(1);

  CommonFlags gen_f;
  auto* gen = app.add_subcommand("gen-data", "Write synthetic train/eval splits");
  add_common(gen, gen_f, true);
  gen->add_option("--frames", gen_f.frames, "Frames per sequence");

  CommonFlags train_f;
  std::string train_data, resume;
  std::size_t stop_after = 0;
  auto* tr = app.add_subcommand("train", "Train a model");
  add_common(tr, train_f, true);
  tr->add_option("--precision", train_f.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  tr->add_option("--frames", train_f.frames, "Frames per sequence");
  tr->add_option("--resume", resume, "Checkpoint directory to resume from")->check(CLI::ExistingDirectory);
  tr->add_flag("--ablate-relations", train_f.ablate, "Spatial-only baseline");
  tr->add_option("--data", train_data, "Dataset root from gen-data (default: generate in memory)")
      ->check(CLI::ExistingDirectory);
  tr->add_option("--stop-after-epochs", stop_after, "Stop once this many epochs are complete");

  std::string eval_ckpt, eval_data, eval_out;
  bool gt_bypass = false;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--checkpoint", eval_ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--data", eval_data, "Dataset root or split directory (default: regenerate)")
      ->check(CLI::ExistingDirectory);
  ev->add_option("--out", eval_out, "Directory for metrics.json and actions.csv")->required();
  ev->add_flag("--gt-bypass", gt_bypass, "Score ground truth as the prediction");

  CommonFlags gc_f;
  double gc_tol = 1e-4;
  std::size_t gc_entries = 0;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full training loss");
  add_common(gc, gc_f, false);
  gc->add_option("--tol", gc_tol, "Relative error tolerance");
  gc->add_option("--max-entries", gc_entries, "Entries checked per tensor, 0 for all");

  CommonFlags fs_f;
  std::vector<std::size_t> fs_frames{8, 32, 128};
  std::vector<std::uint64_t> fs_seeds{0};
  auto* fsub = app.add_subcommand("frame-study", "Train and evaluate across sequence lengths");
  add_common(fsub, fs_f, true);
  fsub->add_option("--frames", fs_frames, "Comma-separated sequence lengths")->delimiter(',');
  fsub->add_option("--seeds", fs_seeds, "Comma-separated seeds")->delimiter(',');
  fsub->add_flag("--ablate-relations", fs_f.ablate, "Spatial-only baseline");

  std::string inspect_path;
  auto* ins = app.add_subcommand("inspect-checkpoint", "Print a checkpoint summary");
  ins->add_option("checkpoint", inspect_path, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*gen) {
      const RunConfig cfg = resolve(gen_f);
      write_splits(cfg, gen_f.out);
      std::cout << "wrote " << cfg.data.train_samples << " train and " << cfg.data.eval_samples
                << " eval samples to " << gen_f.out << '\n';
    } else if (*tr) {
      const RunConfig cfg = resolve(train_f);
      const Splits data = train_data.empty() ? make_splits(cfg) : load_splits(cfg, train_data);
      TrainOptions opts;
      opts.out_dir = train_f.out;
      if (!resume.empty()) opts.resume = fs::path(resume);
      opts.stop_after_epochs = stop_after;
      opts.log = print_log;
      const auto t0 = std::chrono::steady_clock::now();
      const TrainResult r = train(cfg, data, opts);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cout << "steps " << r.steps_done << " in " << secs << " s, checkpoint " << r.final_checkpoint.string()
                << '\n';
      if (r.report) {
        std::cout << "PCK " << r.report->overall.pck << " MSE " << r.report->overall.mse << " AP "
                  << r.report->overall.ap << '\n';
      }
    } else if (*ev) {
      const CheckpointInfo info = read_checkpoint_info(eval_ckpt);
      Dataset data;
      if (eval_data.empty()) {
        data = make_splits(info.config).eval;
      } else {
        const fs::path root(eval_data);
        data = fs::exists(root / "manifest.json") ? read_dataset(root)
               : fs::exists(root / "eval")        ? read_dataset(root / "eval")
                                                  : read_dataset(root / "train");
      }
      const MetricReport report = evaluate_checkpoint(eval_ckpt, data, gt_bypass);
      write_report(report, eval_out);
      std::cout << report_to_json(report) << '\n';
    } else if (*gc) {
      RunConfig cfg = gc_f.config.empty() ? gradcheck_config() : load_config(gc_f.config);
      if (gc_f.seed) cfg.seed = *gc_f.seed;
      cfg.precision = Precision::f64;
      const GradCheckRun r = run_gradcheck(cfg, gc_entries);
      for (const auto& [name, err] : r.per_param) std::cout << name << ' ' << err << '\n';
      std::cout << "tensors " << r.tensors << " entries " << r.entries << " max_rel_error " << r.max_rel_error
                << " tol " << gc_tol << '\n';
      if (!(r.max_rel_error < gc_tol)) {
        std::cerr << "gradcheck failed\n";
        return kExitGradcheck;
      }
    } else if (*fsub) {
      const RunConfig cfg = resolve(fs_f);
      const auto rows = frame_length_study(cfg, fs_frames, fs_seeds, fs_f.out, print_log);
      std::cout << "frames,AP,AR,PCK,MSE\n";
      for (const auto& r : rows) {
        std::cout << r.frames << ',' << r.mean.ap << ',' << r.mean.ar << ',' << r.mean.pck << ',' << r.mean.mse
                  << '\n';
      }
    } else if (*ins) {
      std::cout << describe_checkpoint(read_checkpoint_info(inspect_path));
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return 0;
}
