// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

// Model and training configuration as flat key=value text or JSON.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hylog/losses.hpp"
#include "hylog/network.hpp"
#include "hylog/synth.hpp"

namespace hylog {

struct TrainConfig {
  std::size_t batch_size = 4;
  double lr = 1e-4;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // 0 = no cap
  std::uint64_t seed = 1;
  LossWeights weights;
  bool augment = false;
  std::size_t threads = 1;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

inline BlockKind parse_block_kind(const std::string& s) {
  for (auto k : {BlockKind::cnn, BlockKind::vit, BlockKind::local, BlockKind::global, BlockKind::sequential,
                 BlockKind::hybrid})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown backbone: " + s);
}

inline DecoderMode parse_decoder_mode(const std::string& s) {
  for (auto m : {DecoderMode::full, DecoderMode::without_rs, DecoderMode::with_r, DecoderMode::with_s})
    if (s == to_string(m)) return m;
  if (s == "without_rs") return DecoderMode::without_rs;
  if (s == "with_r") return DecoderMode::with_r;
  if (s == "with_s") return DecoderMode::with_s;
  throw std::invalid_argument("unknown decoder mode: " + s);
}

inline FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "cfsm") return FusionMode::cfsm;
  if (s == "sum") return FusionMode::sum;
  throw std::invalid_argument("unknown fusion mode: " + s);
}

namespace detail {

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key " + key + ": expected an integer, got '" + v + "'");
  }
  if (pos != v.size() || (!v.empty() && v[0] == '-')) {
    throw std::invalid_argument("config key " + key + ": expected an integer, got '" + v + "'");
  }
  return static_cast<std::size_t>(n);
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d = 0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key " + key + ": expected a number, got '" + v + "'");
  }
  if (pos != v.size()) throw std::invalid_argument("config key " + key + ": expected a number, got '" + v + "'");
  return d;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config key " + key + ": expected true/false, got '" + v + "'");
}

inline std::string format_double(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

}  // namespace detail

// Every addressable key with its current value, in a fixed order.
inline std::vector<std::pair<std::string, std::string>> config_pairs(const RunConfig& c) {
  const auto& m = c.model;
  const auto& t = c.train;
  auto s = [](std::size_t v) { return std::to_string(v); };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"height", s(m.height)},
      {"width", s(m.width)},
      {"stages", s(m.stages)},
      {"base_channels", s(m.base_channels)},
      {"input_channels", s(m.input_channels)},
      {"grid_per_side", s(m.grid_per_side)},
      {"global_downscale", s(m.global_downscale)},
      {"backbone", to_string(m.backbone)},
      {"decoders", to_string(m.decoders)},
      {"fusion", to_string(m.fusion)},
      {"pos_encoding", b(m.pos_encoding)},
      {"vit_depth", s(m.vit_depth)},
      {"heads", s(m.heads)},
      {"mlp_ratio", s(m.mlp_ratio)},
      {"cfsm_reduction", s(m.cfsm_reduction)},
      {"batch_size", s(t.batch_size)},
      {"lr", detail::format_double(t.lr)},
      {"epochs", s(t.epochs)},
      {"max_steps", s(t.max_steps)},
      {"seed", std::to_string(t.seed)},
      {"weight_reflectance", detail::format_double(t.weights.reflectance)},
      {"weight_shading", detail::format_double(t.weights.shading)},
      {"weight_dehaze", detail::format_double(t.weights.dehaze)},
      {"augment", b(t.augment)},
      {"threads", s(t.threads)},
  };
}

inline void set_config_value(RunConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  auto& m = c.model;
  auto& t = c.train;
  if (key == "height") m.height = parse_size(key, v);
  else if (key == "width") m.width = parse_size(key, v);
  else if (key == "stages") m.stages = parse_size(key, v);
  else if (key == "base_channels") m.base_channels = parse_size(key, v);
  else if (key == "input_channels") m.input_channels = parse_size(key, v);
  else if (key == "grid_per_side") m.grid_per_side = parse_size(key, v);
  else if (key == "global_downscale") m.global_downscale = parse_size(key, v);
  else if (key == "backbone") m.backbone = parse_block_kind(v);
  else if (key == "decoders") m.decoders = parse_decoder_mode(v);
  else if (key == "fusion") m.fusion = parse_fusion_mode(v);
  else if (key == "pos_encoding") m.pos_encoding = parse_bool(key, v);
  else if (key == "vit_depth") m.vit_depth = parse_size(key, v);
  else if (key == "heads") m.heads = parse_size(key, v);
  else if (key == "mlp_ratio") m.mlp_ratio = parse_size(key, v);
  else if (key == "cfsm_reduction") m.cfsm_reduction = parse_size(key, v);
  else if (key == "batch_size") t.batch_size = parse_size(key, v);
  else if (key == "lr") t.lr = parse_double(key, v);
  else if (key == "epochs") t.epochs = parse_size(key, v);
  else if (key == "max_steps") t.max_steps = parse_size(key, v);
  else if (key == "seed") t.seed = parse_size(key, v);
  else if (key == "weight_reflectance") t.weights.reflectance = parse_double(key, v);
  else if (key == "weight_shading") t.weights.shading = parse_double(key, v);
  else if (key == "weight_dehaze") t.weights.dehaze = parse_double(key, v);
  else if (key == "augment") t.augment = parse_bool(key, v);
  else if (key == "threads") t.threads = parse_size(key, v);
  else throw std::invalid_argument("unknown config key: " + key);
}

inline std::string format_config(const RunConfig& c) {
  std::string out;
  for (const auto& [k, v] : config_pairs(c)) out += k + "=" + v + "\n";
  return out;
}

// Lines "key=value"; blank lines and lines starting with '#' are skipped.
inline RunConfig parse_config_text(const std::string& text) {
  RunConfig c;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("config line " + std::to_string(lineno) + ": missing '='");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    set_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

inline std::string format_config_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  for (const auto& [k, v] : config_pairs(c)) j[k] = v;
  return j.dump(2) + "\n";
}

// JSON object with the same keys; values may be strings, numbers or booleans.
inline RunConfig parse_config_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("config JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("config JSON must be an object");
  RunConfig c;
  for (const auto& [k, v] : j.items()) {
    std::string s;
    if (v.is_string()) s = v.get<std::string>();
    else if (v.is_boolean()) s = v.get<bool>() ? "true" : "false";
    else if (v.is_number_unsigned()) s = std::to_string(v.get<unsigned long long>());
    else if (v.is_number_integer()) s = std::to_string(v.get<long long>());
    else if (v.is_number_float()) s = detail::format_double(v.get<double>());
    else throw FormatError("config JSON key " + k + " has an unsupported type");
    set_config_value(c, k, s);
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (path.extension() == ".json" || (first != std::string::npos && text[first] == '{')) {
    return parse_config_json(text);
  }
  return parse_config_text(text);
}

// Numeric snapshot of the model configuration for checkpoints; enums are
// stored as their ordinal.
inline std::vector<std::pair<std::string, double>> model_config_numeric(const ModelConfig& m) {
  auto d = [](std::size_t v) { return static_cast<double>(v); };
  return {
      {"height", d(m.height)},
      {"width", d(m.width)},
      {"stages", d(m.stages)},
      {"base_channels", d(m.base_channels)},
      {"input_channels", d(m.input_channels)},
      {"grid_per_side", d(m.grid_per_side)},
      {"global_downscale", d(m.global_downscale)},
      {"backbone", static_cast<double>(static_cast<int>(m.backbone))},
      {"decoders", static_cast<double>(static_cast<int>(m.decoders))},
      {"fusion", static_cast<double>(static_cast<int>(m.fusion))},
      {"pos_encoding", m.pos_encoding ? 1.0 : 0.0},
      {"vit_depth", d(m.vit_depth)},
      {"heads", d(m.heads)},
      {"mlp_ratio", d(m.mlp_ratio)},
      {"cfsm_reduction", d(m.cfsm_reduction)},
  };
}

inline ModelConfig model_config_from_numeric(const std::map<std::string, double>& values) {
  ModelConfig m;
  auto get = [&](const std::string& k) -> double {
    auto it = values.find(k);
    if (it == values.end()) throw FormatError("checkpoint lacks config key " + k);
    return it->second;
  };
  auto z = [&](const std::string& k) { return static_cast<std::size_t>(get(k)); };
  auto code = [&](const std::string& k, int count) {
    const int v = static_cast<int>(get(k));
    if (v < 0 || v >= count) throw FormatError("checkpoint config key " + k + " has invalid code");
    return v;
  };
  m.height = z("height");
  m.width = z("width");
  m.stages = z("stages");
  m.base_channels = z("base_channels");
  m.input_channels = z("input_channels");
  m.grid_per_side = z("grid_per_side");
  m.global_downscale = z("global_downscale");
  m.backbone = static_cast<BlockKind>(code("backbone", 6));
  m.decoders = static_cast<DecoderMode>(code("decoders", 4));
  m.fusion = static_cast<FusionMode>(code("fusion", 2));
  m.pos_encoding = get("pos_encoding") != 0.0;
  m.vit_depth = z("vit_depth");
  m.heads = z("heads");
  m.mlp_ratio = z("mlp_ratio");
  m.cfsm_reduction = z("cfsm_reduction");
  return m;
}

}  // namespace hylog
