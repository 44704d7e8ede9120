// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "stpose/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "stpose/error.hpp"
#include "stpose/gradcheck.hpp"
#include "stpose/layers.hpp"
#include "stpose/rng.hpp"

namespace stpose {

namespace fs = std::filesystem;

Splits make_splits(const RunConfig& cfg) {
  cfg.validate();
  Splits s;
  s.train.config = cfg.train_data();
  s.train.samples = generate_dataset(s.train.config);
  if (cfg.data.eval_samples == 0) {
    s.eval = s.train;
  } else {
    s.eval.config = cfg.eval_data();
    s.eval.samples = generate_dataset(s.eval.config);
  }
  return s;
}

void check_dataset_matches(const RunConfig& cfg, const Dataset& data, const std::string& what) {
  const DatasetConfig& d = data.config;
  auto mismatch = [&](const char* field, std::size_t got, std::size_t want) {
    throw ValidationError(what + ": dataset " + field + " = " + std::to_string(got) + " but config expects " +
                          std::to_string(want));
  };
  if (d.joints != cfg.data.joints) mismatch("joints", d.joints, cfg.data.joints);
  if (d.views != cfg.data.views) mismatch("views", d.views, cfg.data.views);
  if (d.frames != cfg.data.frames) mismatch("frames", d.frames, cfg.data.frames);
  if (d.image_size != cfg.data.image_size) mismatch("image_size", d.image_size, cfg.data.image_size);
  if (data.samples.empty()) throw ValidationError(what + ": dataset has no samples");
}

Splits load_splits(const RunConfig& cfg, const fs::path& dir) {
  cfg.validate();
  Splits s;
  const fs::path train_dir = fs::exists(dir / "train") ? dir / "train" : dir;
  s.train = read_dataset(train_dir);
  check_dataset_matches(cfg, s.train, train_dir.string());
  if (fs::exists(dir / "eval")) {
    s.eval = read_dataset(dir / "eval");
    check_dataset_matches(cfg, s.eval, (dir / "eval").string());
  } else {
    s.eval = s.train;
  }
  return s;
}

void write_splits(const RunConfig& cfg, const fs::path& dir) {
  const Splits s = make_splits(cfg);
  write_dataset(s.train, dir / "train");
  if (cfg.data.eval_samples > 0) write_dataset(s.eval, dir / "eval");
}

// ---------------------------------------------------------------------------

template <typename T>
MetricReport evaluate_params(const RunConfig& cfg, const ParamStore<T>& params,
                             const std::vector<PoseSequenceSample>& samples, bool gt_bypass) {
  const ModelConfig mc = cfg.model_config();
  MetricAccumulator acc(cfg.metric_options());
  for (const PoseSequenceSample& s : samples) {
    const Tensor<double> pred = gt_bypass ? s.pose2d : predict(mc, params, s.images).template cast<double>();
    if (!pred.all_finite()) throw NumericError("evaluate: non-finite prediction");
    acc.add(s.action, pred, s.pose2d, &s.cameras, &s.skeleton.positions);
  }
  return acc.finish();
}

void write_report(const MetricReport& report, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "metrics.json") << report_to_json(report) << '\n';
  std::ofstream(out_dir / "actions.csv") << report_to_csv(report, action_labels());
}

MetricReport evaluate_checkpoint(const fs::path& ckpt, const Dataset& data, bool gt_bypass) {
  const CheckpointInfo info = read_checkpoint_info(ckpt);
  check_dataset_matches(info.config, data, "evaluate");
  if (info.precision == Precision::f64) {
    return evaluate_params(info.config, load_checkpoint<double>(ckpt).params, data.samples, gt_bypass);
  }
  return evaluate_params(info.config, load_checkpoint<float>(ckpt).params, data.samples, gt_bypass);
}

// ---------------------------------------------------------------------------

namespace {

std::string ckpt_name(std::size_t epoch) {
  std::ostringstream s;
  s << "ckpt_epoch_" << std::setw(4) << std::setfill('0') << epoch;
  return s.str();
}

// Keeps rows of an existing CSV whose first column is below `limit`.
void truncate_csv(const fs::path& file, const std::string& header, std::uint64_t limit) {
  std::vector<std::string> keep;
  std::ifstream in(file);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stoull(line.substr(0, line.find(','))) < limit) keep.push_back(line);
  }
  in.close();
  std::ofstream out(file, std::ios::trunc);
  out << header << '\n';
  for (const auto& l : keep) out << l << '\n';
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, {0x73687566ULL, epoch}));
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  return order;
}

template <typename T>
Tensor<T> target_of(const PoseSequenceSample& s) {
  return s.pose2d.cast<T>();
}

template <typename T>
TrainResult train_impl(const RunConfig& cfg, const Splits& data, const TrainOptions& opts) {
  cfg.validate();
  check_dataset_matches(cfg, data.train, "train split");
  check_dataset_matches(cfg, data.eval, "eval split");
  const ModelConfig mc = cfg.model_config();
  auto log = [&](const std::string& m) {
    if (opts.log) opts.log(m);
  };

  TrainState<T> st;
  if (opts.resume) {
    CheckpointInfo info;
    st = load_checkpoint<T>(*opts.resume, &info);
    if (info.config_hash != config_hash(cfg)) {
      throw ValidationError("resume: checkpoint " + opts.resume->string() + " was written with a different config");
    }
    log("resumed from " + opts.resume->string() + " at epoch " + std::to_string(st.epoch));
  } else {
    st.params = init_params(mc, cfg.init_seed()).template cast<T>();
    st.opt = AdamState<T>::zeros_like(st.params);
  }

  const std::size_t n = data.train.samples.size();
  const std::size_t accum = cfg.optimizer.grad_accum;
  const std::size_t steps_per_epoch = n / accum;
  const std::uint64_t total_steps = static_cast<std::uint64_t>(steps_per_epoch) * cfg.schedule.epochs;
  const double warm = static_cast<double>(cfg.schedule.warmup_epochs) / static_cast<double>(cfg.schedule.epochs);
  const AdamWHyper hyper{cfg.optimizer.beta1, cfg.optimizer.beta2, cfg.optimizer.eps};

  fs::create_directories(opts.out_dir);
  const fs::path loss_csv = opts.out_dir / "loss.csv", epoch_csv = opts.out_dir / "epochs.csv";
  const std::string loss_header = "step,epoch,lr,loss";
  const std::string epoch_header = "epoch,mean_loss,AP,AR,PCK,MSE";
  truncate_csv(loss_csv, loss_header, st.step);
  truncate_csv(epoch_csv, epoch_header, st.epoch + 1);
  std::ofstream loss_out(loss_csv, std::ios::app), epoch_out(epoch_csv, std::ios::app);
  loss_out << std::setprecision(17);
  epoch_out << std::setprecision(17);

  std::vector<Tensor<T>> targets;
  for (const auto& s : data.train.samples) targets.push_back(target_of<T>(s));

  TrainResult res;
  const std::size_t last_epoch = opts.stop_after_epochs ? std::min(opts.stop_after_epochs, cfg.schedule.epochs)
                                                        : cfg.schedule.epochs;
  for (std::size_t epoch = st.epoch; epoch < last_epoch; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(cfg.seed, epoch, n);
    double epoch_loss = 0.0;
    for (std::size_t k = 0; k < steps_per_epoch; ++k) {
      GradMap<T> grads;
      double loss = 0.0;
      for (std::size_t a = 0; a < accum; ++a) {
        const std::size_t idx = order[k * accum + a];
        Tape<T> tape;
        ParamBinder<T> binder(tape, st.params);
        Var<T> pred = full_forward(Scope<T>(binder), mc, data.train.samples[idx].images);
        Var<T> l = mse_loss(pred, tape.constant(targets[idx]));
        loss += static_cast<double>(l.value().item());
        GradMap<T> g = tape.backward(l);
        if (grads.empty()) {
          grads = std::move(g);
        } else {
          for (auto& [name, t] : g) {
            auto d = grads.at(name).data();
            auto s = t.data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
          }
        }
      }
      loss /= static_cast<double>(accum);
      if (accum > 1) {
        for (auto& [_, t] : grads) {
          for (auto& x : t.data()) x /= static_cast<T>(accum);
        }
      }
      if (!std::isfinite(loss)) {
        throw NumericError("train: non-finite loss at step " + std::to_string(st.step) + " (epoch " +
                           std::to_string(epoch + 1) + ")");
      }
      for (const auto& [name, t] : grads) {
        if (!t.all_finite()) throw NumericError("train: non-finite gradient for '" + name + "'");
      }
      const double e = static_cast<double>(st.step) / static_cast<double>(total_steps);
      const double lr = lr_schedule(e, warm, cfg.optimizer.lr);
      adamw_step(st.params, grads, st.opt, lr, cfg.optimizer.weight_decay, hyper);
      loss_out << st.step << ',' << epoch + 1 << ',' << lr << ',' << loss << '\n';
      res.step_losses.push_back(loss);
      epoch_loss += loss;
      ++st.step;
    }
    st.epoch = epoch + 1;
    EpochRecord rec;
    rec.epoch = st.epoch;
    rec.mean_loss = epoch_loss / static_cast<double>(steps_per_epoch);
    const bool final_epoch = st.epoch == cfg.schedule.epochs;
    if ((cfg.eval.every && st.epoch % cfg.eval.every == 0) || final_epoch) {
      rec.eval = evaluate_params(cfg, st.params, data.eval.samples).overall;
    }
    epoch_out << rec.epoch << ',' << rec.mean_loss;
    if (rec.eval) {
      epoch_out << ',' << rec.eval->ap << ',' << rec.eval->ar << ',' << rec.eval->pck << ',' << rec.eval->mse;
    } else {
      epoch_out << ",,,,";
    }
    epoch_out << '\n';
    std::ostringstream msg;
    msg << "epoch " << rec.epoch << "/" << cfg.schedule.epochs << " loss " << rec.mean_loss;
    if (rec.eval) msg << " PCK " << rec.eval->pck << " MSE " << rec.eval->mse;
    log(msg.str());
    res.epochs.push_back(rec);
    loss_out.flush();
    epoch_out.flush();
    if (cfg.schedule.checkpoint_every && st.epoch % cfg.schedule.checkpoint_every == 0) {
      save_checkpoint(opts.out_dir / ckpt_name(st.epoch), cfg, st);
    }
  }
  res.steps_done = st.step;
  if (st.epoch == cfg.schedule.epochs) {
    res.final_checkpoint = opts.out_dir / "final";
    save_checkpoint(res.final_checkpoint, cfg, st);
    res.report = evaluate_params(cfg, st.params, data.eval.samples);
    write_report(*res.report, opts.out_dir);
  } else {
    res.final_checkpoint = opts.out_dir / ckpt_name(st.epoch);
    save_checkpoint(res.final_checkpoint, cfg, st);
  }
  return res;
}

}  // namespace

TrainResult train(const RunConfig& cfg, const Splits& data, const TrainOptions& opts) {
  if (cfg.precision == Precision::f64) return train_impl<double>(cfg, data, opts);
  return train_impl<float>(cfg, data, opts);
}

// ---------------------------------------------------------------------------

std::vector<FrameStudyRow> frame_length_study(const RunConfig& base, const std::vector<std::size_t>& frames,
                                              const std::vector<std::uint64_t>& seeds, const fs::path& out_dir,
                                              const std::function<void(const std::string&)>& log) {
  if (frames.empty() || seeds.empty()) throw ValidationError("frame study: need at least one f and one seed");
  fs::create_directories(out_dir);
  std::vector<FrameStudyRow> rows;
  std::ofstream runs(out_dir / "frame_study_runs.csv");
  runs << std::setprecision(10) << "frames,seed,AP,AR,PCK,MSE\n";
  for (std::size_t f : frames) {
    FrameStudyRow row;
    row.frames = f;
    for (std::uint64_t seed : seeds) {
      RunConfig cfg = base;
      cfg.seed = seed;
      cfg.data.frames = f;
      cfg.schedule.checkpoint_every = 0;
      cfg.eval.every = 0;
      const Splits data = make_splits(cfg);
      TrainOptions opts;
      std::ostringstream sub;
      sub << "f" << f << "_seed" << seed;
      opts.out_dir = out_dir / sub.str();
      const TrainResult r = train(cfg, data, opts);
      const MetricValues v = r.report->overall;
      row.seeds.push_back(seed);
      row.per_seed.push_back(v);
      runs << f << ',' << seed << ',' << v.ap << ',' << v.ar << ',' << v.pck << ',' << v.mse << '\n';
      if (log) {
        std::ostringstream m;
        m << "frame study f=" << f << " seed=" << seed << " PCK " << v.pck << " MSE " << v.mse;
        log(m.str());
      }
    }
    const double k = static_cast<double>(row.per_seed.size());
    for (const MetricValues& v : row.per_seed) {
      row.mean.ap += v.ap / k;
      row.mean.ar += v.ar / k;
      row.mean.pck += v.pck / k;
      row.mean.mse += v.mse / k;
    }
    rows.push_back(std::move(row));
  }
  std::ofstream table(out_dir / "frame_study.csv");
  table << std::setprecision(10) << "frames,AP,AR,PCK,MSE\n";
  for (const auto& r : rows) {
    table << r.frames << ',' << r.mean.ap << ',' << r.mean.ar << ',' << r.mean.pck << ',' << r.mean.mse << '\n';
  }
  return rows;
}

// ---------------------------------------------------------------------------

RunConfig gradcheck_config() {
  RunConfig c;
  c.seed = 7;
  c.precision = Precision::f64;
  c.data.train_samples = 1;
  c.data.eval_samples = 0;
  c.data.frames = 2;
  c.data.views = 2;
  c.data.joints = 5;
  c.data.image_size = 32;
  c.data.blob_sigma = 1.5;
  c.model.patch = 4;
  c.model.stage_depths = {1, 1};
  c.model.stage_dims = {8, 16};
  c.model.stage_heads = {2, 2};
  c.model.window = 4;
  c.model.mlp_ratio = 2;
  c.model.token_dim = 16;
  c.model.relation_layers = 1;
  c.model.relation_heads = 2;
  c.model.max_frames = 4;
  c.schedule.epochs = 2;
  c.schedule.warmup_epochs = 1;
  return c;
}

GradCheckRun run_gradcheck(const RunConfig& cfg, std::size_t max_entries_per_param) {
  cfg.validate();
  const ModelConfig mc = cfg.model_config();
  const PoseSequenceSample sample = generate_sample(cfg.train_data(), 0);
  const ParamStore<double> params = init_params(mc, cfg.init_seed());
  const LossBuilder loss = [&](const Scope<double>& root) {
    Var<double> pred = full_forward(root, mc, sample.images);
    return mse_loss(pred, root.tape().constant(sample.pose2d));
  };
  GradCheckOptions o;
  o.max_entries_per_param = max_entries_per_param;
  const GradCheckReport rep = finite_diff_check(loss, params, o);
  GradCheckRun r;
  r.max_rel_error = rep.max_rel_error;
  r.tensors = rep.params.size();
  for (const auto& p : rep.params) {
    r.entries += p.checked;
    r.per_param.emplace_back(p.name, p.rel_error);
  }
  return r;
}

template MetricReport evaluate_params(const RunConfig&, const ParamStore<float>&,
                                      const std::vector<PoseSequenceSample>&, bool);
template MetricReport evaluate_params(const RunConfig&, const ParamStore<double>&,
                                      const std::vector<PoseSequenceSample>&, bool);

}  // namespace stpose
