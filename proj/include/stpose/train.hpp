// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stpose/checkpoint.hpp"
#include "stpose/config.hpp"
#include "stpose/metrics.hpp"
#include "stpose/synthdata.hpp"

namespace stpose {

struct Splits {
  Dataset train, eval;
};

/// Generated in memory from the config.
Splits make_splits(const RunConfig& cfg);

/// `dir` holds `train/` and optionally `eval/` dataset directories; without
/// `eval/` the training split is evaluated. Throws ValidationError when a split
/// disagrees with the config on joints, views, frames or image size.
Splits load_splits(const RunConfig& cfg, const std::filesystem::path& dir);

/// Writes `train/` and, when eval_samples > 0, `eval/`.
void write_splits(const RunConfig& cfg, const std::filesystem::path& dir);

void check_dataset_matches(const RunConfig& cfg, const Dataset& data, const std::string& what);

struct TrainOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;  // checkpoint directory
  std::size_t stop_after_epochs = 0;  // nonzero: stop once this many epochs are done
  std::function<void(const std::string&)> log;  // progress lines; null silences
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based count of completed epochs
  double mean_loss = 0.0;
  std::optional<MetricValues> eval;
};

struct TrainResult {
  std::vector<double> step_losses;  // steps run in this call
  std::vector<EpochRecord> epochs;
  std::optional<MetricReport> report;  // final evaluation, when training finished
  std::filesystem::path final_checkpoint;
  std::uint64_t steps_done = 0;
};

/// Deterministic in the config. Writes loss.csv, epochs.csv, checkpoints under
/// `ckpt_epoch_NNNN/`, and `final/` plus metrics.json and actions.csv when
/// training completes. Throws NumericError on a non-finite loss.
TrainResult train(const RunConfig& cfg, const Splits& data, const TrainOptions& opts);

/// Runs the model on every sample; with gt_bypass the ground truth stands in
/// for predictions.
template <typename T>
MetricReport evaluate_params(const RunConfig& cfg, const ParamStore<T>& params,
                             const std::vector<PoseSequenceSample>& samples, bool gt_bypass = false);

/// Loads a checkpoint of either precision and evaluates it.
MetricReport evaluate_checkpoint(const std::filesystem::path& ckpt, const Dataset& data,
                                 bool gt_bypass = false);

void write_report(const MetricReport& report, const std::filesystem::path& out_dir);

struct FrameStudyRow {
  std::size_t frames = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricValues> per_seed;
  MetricValues mean;  // over seeds
};

/// Trains one model per (f, seed) on fresh in-memory data and evaluates it on
/// the held-out split. Writes frame_study.csv (one row per f) and
/// frame_study_runs.csv (one row per run) into out_dir.
std::vector<FrameStudyRow> frame_length_study(const RunConfig& base, const std::vector<std::size_t>& frames,
                                              const std::vector<std::uint64_t>& seeds,
                                              const std::filesystem::path& out_dir,
                                              const std::function<void(const std::string&)>& log = {});

/// Micro setup for gradient checking: 32x32 images, f = 2, V = 2, J = 5.
RunConfig gradcheck_config();

struct GradCheckRun {
  double max_rel_error = 0.0;
  std::size_t tensors = 0, entries = 0;
  std::vector<std::pair<std::string, double>> per_param;
};

/// Full training loss of one sample under `cfg`, double precision, every entry.
GradCheckRun run_gradcheck(const RunConfig& cfg, std::size_t max_entries_per_param = 0);

}  // namespace stpose
