// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "stpose/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "stpose/error.hpp"

static_assert(std::endian::native == std::endian::little, "payload I/O assumes a little-endian host");

namespace stpose {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

template <typename T>
constexpr Precision precision_of() {
  return sizeof(T) == 4 ? Precision::f32 : Precision::f64;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

const char* const kSections[] = {"param", "adam_m", "adam_v"};

}  // namespace

template <typename T>
void save_checkpoint(const fs::path& dir, const RunConfig& cfg, const TrainState<T>& state) {
  fs::create_directories(dir);
  const ParamStore<T>* stores[] = {&state.params, &state.opt.m, &state.opt.v};
  json entries = json::array();
  std::ofstream payload(dir / "payload.bin", std::ios::binary);
  if (!payload) throw ParseError((dir / "payload.bin").string() + ": cannot open for writing");
  std::uint64_t offset = 0;
  for (int s = 0; s < 3; ++s) {
    for (const auto& [name, t] : stores[s]->entries()) {
      const std::uint64_t bytes = t.size() * sizeof(T);
      payload.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(bytes));
      entries.push_back({{"section", kSections[s]}, {"name", name}, {"shape", t.shape()},
                         {"offset", offset}, {"bytes", bytes}});
      offset += bytes;
    }
  }
  if (!payload) throw ParseError((dir / "payload.bin").string() + ": write failed");
  const json manifest = {
      {"schema_version", 1},
      {"config_hash", hex64(config_hash(cfg))},
      {"config", json::parse(config_to_json(cfg))},
      {"dtype", to_string(precision_of<T>())},
      {"epoch", state.epoch},
      {"step", state.step},
      {"adam_t", state.opt.t},
      {"payload", "payload.bin"},
      {"payload_bytes", offset},
      {"entries", entries},
  };
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw ParseError((dir / "manifest.json").string() + ": write failed");
}

CheckpointInfo read_checkpoint_info(const fs::path& dir) {
  const fs::path mf = dir / "manifest.json";
  std::ifstream in(mf);
  if (!in) throw ParseError(mf.string() + ": cannot open checkpoint manifest");
  CheckpointInfo info;
  try {
    const json m = json::parse(in);
    info.schema_version = m.at("schema_version").get<int>();
    if (info.schema_version != 1) throw ParseError(mf.string() + ": unsupported schema_version");
    info.config = config_from_json(m.at("config").dump());
    info.config_hash = std::stoull(m.at("config_hash").get<std::string>(), nullptr, 16);
    if (info.config_hash != config_hash(info.config)) {
      throw ParseError(mf.string() + ": config_hash does not match the embedded config");
    }
    info.precision = parse_precision(m.at("dtype").get<std::string>());
    info.epoch = m.at("epoch").get<std::size_t>();
    info.step = m.at("step").get<std::uint64_t>();
    info.adam_t = m.at("adam_t").get<std::uint64_t>();
    info.payload_bytes = m.at("payload_bytes").get<std::uint64_t>();
    const std::size_t width = info.precision == Precision::f32 ? 4 : 8;
    std::uint64_t expect = 0;
    for (const json& e : m.at("entries")) {
      CheckpointEntry c;
      c.section = e.at("section").get<std::string>();
      c.name = e.at("name").get<std::string>();
      c.shape = e.at("shape").get<Shape>();
      c.offset = e.at("offset").get<std::uint64_t>();
      c.bytes = e.at("bytes").get<std::uint64_t>();
      if (c.offset != expect || c.bytes != numel(c.shape) * width) {
        throw ParseError(mf.string() + ": entry '" + c.section + "/" + c.name + "' breaks the payload layout");
      }
      expect += c.bytes;
      info.entries.push_back(std::move(c));
    }
    if (expect != info.payload_bytes) throw ParseError(mf.string() + ": entries do not cover the payload");
  } catch (const json::exception& e) {
    throw ParseError(mf.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ParseError(mf.string() + ": " + e.what());
  }
  return info;
}

template <typename T>
TrainState<T> load_checkpoint(const fs::path& dir, CheckpointInfo* info_out) {
  CheckpointInfo info = read_checkpoint_info(dir);
  if (info.precision != precision_of<T>()) {
    throw ValidationError("checkpoint " + dir.string() + " stores " + to_string(info.precision) +
                          " values, requested " + to_string(precision_of<T>()));
  }
  const fs::path pf = dir / "payload.bin";
  if (!fs::exists(pf) || fs::file_size(pf) != info.payload_bytes) {
    throw ParseError(pf.string() + ": missing or wrong size");
  }
  std::ifstream in(pf, std::ios::binary);
  TrainState<T> st;
  st.epoch = info.epoch;
  st.step = info.step;
  st.opt.t = info.adam_t;
  for (const CheckpointEntry& e : info.entries) {
    std::vector<T> v(numel(e.shape));
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(e.bytes));
    if (!in) throw ParseError(pf.string() + ": short read");
    Tensor<T> t(e.shape, std::move(v));
    if (e.section == "param") st.params.add(e.name, std::move(t));
    else if (e.section == "adam_m") st.opt.m.add(e.name, std::move(t));
    else if (e.section == "adam_v") st.opt.v.add(e.name, std::move(t));
    else throw ParseError(dir.string() + "/manifest.json: unknown section '" + e.section + "'");
  }
  if (info_out) *info_out = std::move(info);
  return st;
}

std::string describe_checkpoint(const CheckpointInfo& info) {
  std::ostringstream s;
  std::size_t params = 0, values = 0;
  for (const auto& e : info.entries) {
    if (e.section == "param") {
      ++params;
      values += numel(e.shape);
    }
  }
  s << "schema_version " << info.schema_version << '\n'
    << "config_hash    " << hex64(info.config_hash) << '\n'
    << "dtype          " << to_string(info.precision) << '\n'
    << "epoch          " << info.epoch << '\n'
    << "step           " << info.step << '\n'
    << "payload_bytes  " << info.payload_bytes << '\n'
    << "parameters     " << params << " tensors, " << values << " values\n";
  for (const auto& e : info.entries) {
    if (e.section != "param") continue;
    s << "  " << e.name << ' ' << shape_string(e.shape) << " @" << e.offset << '\n';
  }
  return s.str();
}

template void save_checkpoint(const fs::path&, const RunConfig&, const TrainState<float>&);
template void save_checkpoint(const fs::path&, const RunConfig&, const TrainState<double>&);
template TrainState<float> load_checkpoint(const fs::path&, CheckpointInfo*);
template TrainState<double> load_checkpoint(const fs::path&, CheckpointInfo*);

}  // namespace stpose
