// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

// Binary checkpoint format (version 1), all integers little-endian:
//
//   "HYLG" | u32 version | u32 entry count
//   per entry: u16 name length | name | u8 rank | u32 dims[rank] | f32 payload
//
// Parameters use their store names. Reserved prefixes hold the rest:
//   __adam.m/<name>, __adam.v/<name>   optimizer moments
//   __adam.hyper                       lr, beta1, beta2, eps (f64 each)
//   __adam.t, __step                   u64 counters
//   __config.<key>                     model configuration, enums as ordinals
//   __actnorm_initialized              1 or 0
// 64-bit values are stored bit-for-bit, each in two consecutive f32 slots.
// Payload values are not checksummed.

#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "hylog/config_io.hpp"
#include "hylog/optim.hpp"

namespace hylog {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;

  bool operator==(const CheckpointEntry&) const = default;
};

struct Checkpoint {
  ModelConfig config;
  std::uint64_t step = 0;
  bool actnorm_initialized = false;
  std::vector<CheckpointEntry> params;
  bool has_optimizer = false;
  AdamHyper hyper;
  std::uint64_t adam_t = 0;
  std::vector<CheckpointEntry> adam_m, adam_v;
};

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& b) : bytes_(b) {}

  std::uint32_t u(std::size_t width) {
    need(width);
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += width;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<float> pack_u64(std::uint64_t v) {
  std::vector<float> out(2);
  const auto lo = static_cast<std::uint32_t>(v), hi = static_cast<std::uint32_t>(v >> 32);
  std::memcpy(&out[0], &lo, 4);
  std::memcpy(&out[1], &hi, 4);
  return out;
}

inline std::uint64_t unpack_u64(const float* p) {
  std::uint32_t lo = 0, hi = 0;
  std::memcpy(&lo, &p[0], 4);
  std::memcpy(&hi, &p[1], 4);
  return (static_cast<std::uint64_t>(hi) << 32) | lo;
}

template <typename T>
std::vector<float> to_f32(std::span<const T> v) {
  return std::vector<float>(v.begin(), v.end());
}

}  // namespace detail

inline std::string encode_entries(const std::vector<CheckpointEntry>& entries) {
  std::string out = "HYLG";
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(entries.size()));
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.name).second) throw FormatError("duplicate checkpoint entry: " + e.name);
    if (e.name.size() > 0xFFFF) throw FormatError("checkpoint entry name too long");
    if (e.shape.size() > 0xFF) throw FormatError("checkpoint entry rank too large");
    if (numel_of(e.shape) != e.values.size()) throw FormatError("checkpoint entry " + e.name + " size mismatch");
    detail::put_u16(out, static_cast<std::uint16_t>(e.name.size()));
    out += e.name;
    out.push_back(static_cast<char>(e.shape.size()));
    for (auto d : e.shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (float f : e.values) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

inline std::vector<CheckpointEntry> decode_entries(const std::string& bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 4 || bytes.compare(0, 4, "HYLG") != 0) throw FormatError("bad checkpoint magic");
  r.str(4);
  const auto version = r.u(4);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = r.u(4);
  std::vector<CheckpointEntry> out;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = r.str(r.u(2));
    if (!seen.insert(e.name).second) throw FormatError("duplicate checkpoint entry: " + e.name);
    const auto rank = r.u(1);
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      e.shape.push_back(r.u(4));
      n *= e.shape.back();
    }
    if (n > bytes.size()) throw FormatError("checkpoint truncated in entry " + e.name);
    e.values.resize(n);
    for (auto& f : e.values) f = std::bit_cast<float>(r.u(4));
    out.push_back(std::move(e));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint entries");
  return out;
}

inline std::vector<CheckpointEntry> checkpoint_entries(const Checkpoint& c) {
  std::vector<CheckpointEntry> out = c.params;
  if (c.has_optimizer) {
    for (const auto& e : c.adam_m) out.push_back({"__adam.m/" + e.name, e.shape, e.values});
    for (const auto& e : c.adam_v) out.push_back({"__adam.v/" + e.name, e.shape, e.values});
    std::vector<float> hyper;
    for (double d : {c.hyper.lr, c.hyper.beta1, c.hyper.beta2, c.hyper.eps}) {
      auto p = detail::pack_u64(std::bit_cast<std::uint64_t>(d));
      hyper.insert(hyper.end(), p.begin(), p.end());
    }
    out.push_back({"__adam.hyper", {8}, hyper});
    out.push_back({"__adam.t", {2}, detail::pack_u64(c.adam_t)});
  }
  for (const auto& [k, v] : model_config_numeric(c.config)) out.push_back({"__config." + k, {1}, {static_cast<float>(v)}});
  out.push_back({"__step", {2}, detail::pack_u64(c.step)});
  out.push_back({"__actnorm_initialized", {1}, {c.actnorm_initialized ? 1.0f : 0.0f}});
  return out;
}

inline std::string encode_checkpoint(const Checkpoint& c) { return encode_entries(checkpoint_entries(c)); }

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  Checkpoint c;
  std::map<std::string, double> cfg;
  std::map<std::string, CheckpointEntry> m, v;
  bool have_hyper = false, have_t = false, have_step = false;
  auto expect = [](const CheckpointEntry& e, std::size_t n) {
    if (e.values.size() != n) throw FormatError("checkpoint entry " + e.name + " has wrong size");
  };
  for (auto& e : decode_entries(bytes)) {
    if (e.name.rfind("__adam.m/", 0) == 0) {
      e.name = e.name.substr(9);
      m.emplace(e.name, std::move(e));
    } else if (e.name.rfind("__adam.v/", 0) == 0) {
      e.name = e.name.substr(9);
      v.emplace(e.name, std::move(e));
    } else if (e.name == "__adam.hyper") {
      expect(e, 8);
      c.hyper.lr = std::bit_cast<double>(detail::unpack_u64(&e.values[0]));
      c.hyper.beta1 = std::bit_cast<double>(detail::unpack_u64(&e.values[2]));
      c.hyper.beta2 = std::bit_cast<double>(detail::unpack_u64(&e.values[4]));
      c.hyper.eps = std::bit_cast<double>(detail::unpack_u64(&e.values[6]));
      have_hyper = true;
    } else if (e.name == "__adam.t") {
      expect(e, 2);
      c.adam_t = detail::unpack_u64(e.values.data());
      have_t = true;
    } else if (e.name.rfind("__config.", 0) == 0) {
      expect(e, 1);
      cfg[e.name.substr(9)] = e.values[0];
    } else if (e.name == "__step") {
      expect(e, 2);
      c.step = detail::unpack_u64(e.values.data());
      have_step = true;
    } else if (e.name == "__actnorm_initialized") {
      expect(e, 1);
      c.actnorm_initialized = e.values[0] != 0.0f;
    } else if (e.name.rfind("__", 0) == 0) {
      throw FormatError("unknown reserved checkpoint entry: " + e.name);
    } else {
      c.params.push_back(std::move(e));
    }
  }
  if (!have_step) throw FormatError("checkpoint lacks __step");
  c.config = model_config_from_numeric(cfg);
  c.has_optimizer = have_hyper || have_t || !m.empty() || !v.empty();
  if (c.has_optimizer) {
    if (!have_hyper || !have_t) throw FormatError("checkpoint has partial optimizer state");
    for (const auto& p : c.params) {
      auto im = m.find(p.name), iv = v.find(p.name);
      if (im == m.end() || iv == v.end()) throw FormatError("checkpoint lacks optimizer moments for " + p.name);
      if (im->second.shape != p.shape || iv->second.shape != p.shape) {
        throw FormatError("optimizer moment shape mismatch for " + p.name);
      }
      c.adam_m.push_back(im->second);
      c.adam_v.push_back(iv->second);
    }
    if (m.size() != c.params.size() || v.size() != c.params.size()) {
      throw FormatError("checkpoint has optimizer moments for unknown parameters");
    }
  }
  return c;
}

template <typename T>
Checkpoint capture_checkpoint(const DehazeNet<T>& net, const AdamState<T>* adam, std::uint64_t step) {
  Checkpoint c;
  c.config = net.config();
  c.step = step;
  c.actnorm_initialized = net.actnorm_initialized();
  for (const auto& [name, p] : net.store.entries()) c.params.push_back({name, p.shape(), detail::to_f32<T>(p.data())});
  if (adam) {
    c.has_optimizer = true;
    c.hyper = adam->hyper;
    c.adam_t = adam->t;
    for (std::size_t i = 0; i < adam->names.size(); ++i) {
      const Shape& s = c.params.at(i).shape;
      c.adam_m.push_back({adam->names[i], s, detail::to_f32<T>(std::span<const T>(adam->m[i]))});
      c.adam_v.push_back({adam->names[i], s, detail::to_f32<T>(std::span<const T>(adam->v[i]))});
    }
  }
  return c;
}

// Copies parameters (and optimizer state when requested) into a network
// built from the checkpoint's configuration.
template <typename T>
void restore_checkpoint(const Checkpoint& c, DehazeNet<T>& net, AdamState<T>* adam = nullptr) {
  auto& entries = net.store.entries();
  if (entries.size() != c.params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(c.params.size()) + " parameters, network has " +
                      std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& [name, p] = entries[i];
    const auto& e = c.params[i];
    if (e.name != name || e.shape != p.shape()) {
      throw FormatError("checkpoint parameter " + e.name + to_string(e.shape) + " does not match " + name +
                        to_string(p.shape()));
    }
    auto dst = p.mutable_data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<T>(e.values[k]);
  }
  if (c.actnorm_initialized) net.mark_actnorm_initialized();
  if (adam) {
    if (!c.has_optimizer) throw FormatError("checkpoint has no optimizer state");
    *adam = AdamState<T>(net.store, c.hyper);
    adam->t = c.adam_t;
    for (std::size_t i = 0; i < adam->names.size(); ++i) {
      adam->m[i].assign(c.adam_m[i].values.begin(), c.adam_m[i].values.end());
      adam->v[i].assign(c.adam_v[i].values.begin(), c.adam_v[i].values.end());
    }
  }
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const DehazeNet<T>& net, const AdamState<T>* adam,
                     std::uint64_t step) {
  write_file_atomic(path, encode_checkpoint(capture_checkpoint(net, adam, step)));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace hylog
