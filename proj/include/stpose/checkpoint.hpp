// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stpose/config.hpp"
#include "stpose/optim.hpp"

namespace stpose {

template <typename T>
struct TrainState {
  ParamStore<T> params;
  AdamState<T> opt;
  std::size_t epoch = 0;  // completed epochs
  std::uint64_t step = 0;

  friend bool operator==(const TrainState& a, const TrainState& b) {
    return a.epoch == b.epoch && a.step == b.step && a.params == b.params && a.opt == b.opt;
  }
};

struct CheckpointEntry {
  std::string section;  // "param", "adam_m" or "adam_v"
  std::string name;
  Shape shape;
  std::uint64_t offset = 0, bytes = 0;
};

struct CheckpointInfo {
  int schema_version = 1;
  std::uint64_t config_hash = 0;
  RunConfig config;
  Precision precision = Precision::f32;
  std::size_t epoch = 0;
  std::uint64_t step = 0, adam_t = 0;
  std::uint64_t payload_bytes = 0;
  std::vector<CheckpointEntry> entries;  // contiguous, in payload order
};

/// Writes `<dir>/manifest.json` and `<dir>/payload.bin`. The payload holds
/// little-endian values of the run's precision, params first, then both moments.
template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const RunConfig& cfg, const TrainState<T>& state);

/// Throws ParseError on malformed or inconsistent manifests.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir);

/// Throws ValidationError if the stored precision differs from T.
template <typename T>
TrainState<T> load_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info = nullptr);

/// Human-readable summary for the inspect-checkpoint subcommand.
std::string describe_checkpoint(const CheckpointInfo& info);

}  // namespace stpose
