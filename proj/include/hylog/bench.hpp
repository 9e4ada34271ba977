// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

// Analytic attention cost model and a wall-clock benchmark of the block
// variants. MAC counts cover only the QK^T and AV contractions unless the
// full model (projections, MLP, fuse convolution) is requested.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hylog/hylog_block.hpp"

namespace hylog {

enum class AttnVariant { standard, local, global, hybrid, sequential };

inline const char* to_string(AttnVariant v) {
  switch (v) {
    case AttnVariant::standard: return "standard";
    case AttnVariant::local: return "local";
    case AttnVariant::global: return "global";
    case AttnVariant::hybrid: return "hybrid";
    case AttnVariant::sequential: return "sequential";
  }
  return "?";
}

inline AttnVariant parse_attn_variant(const std::string& s) {
  for (auto v : {AttnVariant::standard, AttnVariant::local, AttnVariant::global, AttnVariant::hybrid,
                 AttnVariant::sequential})
    if (s == to_string(v)) return v;
  throw std::invalid_argument("unknown attention variant: " + s);
}

struct FlopModel {
  std::uint64_t height = 0, width = 0, channels = 0;
  std::uint64_t grid_per_side = 1;    // g: windows per side on the local path
  std::uint64_t token_reduction = 1;  // N_g: token-count reduction on the global path
  std::uint64_t heads = 1;
  std::uint64_t mlp_ratio = 4;

  void validate() const {
    if (!height || !width || !channels || !grid_per_side || !token_reduction || !heads) {
      throw std::invalid_argument("flop model fields must be positive");
    }
    if (height % grid_per_side || width % grid_per_side) throw ShapeError("grid does not divide the map");
    if ((height * width) % token_reduction) throw ShapeError("token reduction does not divide the token count");
    if (channels % heads) throw ShapeError("heads do not divide the width");
  }

  std::uint64_t tokens() const { return height * width; }
};

inline std::uint64_t attention_macs(AttnVariant v, const FlopModel& m) {
  m.validate();
  const std::uint64_t n = m.tokens();
  const std::uint64_t standard = 2 * n * n * m.channels;
  const std::uint64_t g2 = m.grid_per_side * m.grid_per_side;
  const std::uint64_t ng2 = m.token_reduction * m.token_reduction;
  const std::uint64_t local = standard / g2;
  const std::uint64_t global = standard / ng2;
  switch (v) {
    case AttnVariant::standard: return standard;
    case AttnVariant::local: return local;
    case AttnVariant::global: return global;
    case AttnVariant::hybrid:
    case AttnVariant::sequential: return local + global;
  }
  throw std::invalid_argument("invalid attention variant");
}

// Reference count by enumerating windows: each M_h x M_w window attends
// within itself at 2 * (window tokens)^2 * C.
inline std::uint64_t local_macs_enumerated(const FlopModel& m) {
  m.validate();
  const std::uint64_t mh = m.height / m.grid_per_side, mw = m.width / m.grid_per_side;
  std::uint64_t total = 0;
  for (std::uint64_t wy = 0; wy < m.grid_per_side; ++wy)
    for (std::uint64_t wx = 0; wx < m.grid_per_side; ++wx) {
      std::uint64_t tokens = 0;
      for (std::uint64_t y = wy * mh; y < (wy + 1) * mh; ++y)
        for (std::uint64_t x = wx * mw; x < (wx + 1) * mw; ++x) ++tokens;
      total += 2 * tokens * tokens * m.channels;
    }
  return total;
}

// Attention terms plus QKV/output projections and the MLP on every
// attended token, and the 3x3 fuse convolution for the hybrid block.
inline std::uint64_t full_block_macs(AttnVariant v, const FlopModel& m) {
  const std::uint64_t c = m.channels, n = m.tokens();
  const std::uint64_t per_token = (4 + 2 * m.mlp_ratio) * c * c;
  const std::uint64_t local = n * per_token, global = n / m.token_reduction * per_token;
  std::uint64_t extra = 0;
  switch (v) {
    case AttnVariant::standard:
    case AttnVariant::local: extra = local; break;
    case AttnVariant::global: extra = global; break;
    case AttnVariant::sequential: extra = local + global; break;
    case AttnVariant::hybrid: extra = local + global + 9 * 2 * c * c * n; break;
  }
  return attention_macs(v, m) + extra;
}

struct BenchSize {
  std::size_t height = 0, width = 0, channels = 0;
};

struct BenchRecord {
  std::string variant;
  std::size_t height = 0, width = 0, channels = 0;
  std::uint64_t macs = 0;
  std::uint64_t ns_median = 0;
  std::size_t runs = 0;
};

inline constexpr const char* kBenchHeader = "variant,H,W,C,macs,ns_median,runs";

inline std::string format_bench_row(const BenchRecord& r) {
  std::ostringstream os;
  os << r.variant << ',' << r.height << ',' << r.width << ',' << r.channels << ',' << r.macs << ',' << r.ns_median
     << ',' << r.runs;
  return os.str();
}

inline BenchSize parse_bench_size(const std::string& s) {
  BenchSize b;
  char x1 = 0, x2 = 0;
  std::istringstream is(s);
  if (!(is >> b.height >> x1 >> b.width >> x2 >> b.channels) || x1 != 'x' || x2 != 'x' || !is.eof()) {
    throw std::invalid_argument("bench size must look like HxWxC, got '" + s + "'");
  }
  return b;
}

struct BenchOptions {
  std::size_t grid_per_side = 8;
  std::size_t global_downscale = 2;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t runs = 3;
  bool full_macs = false;
  std::uint64_t seed = 1;
};

inline FlopModel flop_model_for(const BenchSize& s, const BenchOptions& o) {
  return {s.height, s.width, s.channels, o.grid_per_side, o.global_downscale * o.global_downscale, o.heads,
          o.mlp_ratio};
}

// Times `runs` gradient-free forwards of the variant's block after one warmup.
inline BenchRecord bench_one(AttnVariant v, const BenchSize& s, const BenchOptions& o) {
  if (o.runs < 3) throw std::invalid_argument("benchmark needs at least 3 runs");
  const FlopModel fm = flop_model_for(s, o);
  BenchRecord r{to_string(v), s.height, s.width, s.channels,
                o.full_macs ? full_block_macs(v, fm) : attention_macs(v, fm), 0, o.runs};
  HyLoGConfig cfg;
  cfg.height = s.height;
  cfg.width = s.width;
  cfg.channels = s.channels;
  cfg.window = s.height / o.grid_per_side;
  cfg.global_downscale = o.global_downscale;
  cfg.heads = o.heads;
  cfg.mlp_ratio = o.mlp_ratio;
  if (s.width / cfg.window != o.grid_per_side) throw ShapeError("bench geometry needs square windows");
  static constexpr BlockKind kinds[] = {BlockKind::vit, BlockKind::local, BlockKind::global, BlockKind::hybrid,
                                        BlockKind::sequential};
  ParamStore<float> store;
  Rng rng(o.seed);
  StageBlock<float> block(store, "bench", kinds[static_cast<int>(v)], cfg, rng);
  std::mt19937_64 data_rng(o.seed + 1);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  std::vector<float> xs(s.height * s.width * s.channels);
  for (auto& x : xs) x = u(data_rng);
  const Tensor<float> x(Shape{1, s.height, s.width, s.channels}, std::move(xs));

  NoGradGuard guard;
  block.forward(x, Phase::infer);
  std::vector<std::uint64_t> times;
  for (std::size_t i = 0; i < o.runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    block.forward(x, Phase::infer);
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
  }
  std::sort(times.begin(), times.end());
  r.ns_median = std::max<std::uint64_t>(1, times[times.size() / 2]);
  return r;
}

inline std::vector<BenchRecord> bench(AttnVariant v, const std::vector<BenchSize>& sizes, const BenchOptions& o) {
  std::vector<BenchRecord> out;
  for (const auto& s : sizes) out.push_back(bench_one(v, s, o));
  return out;
}

inline void write_bench_csv(std::ostream& os, const std::vector<BenchRecord>& records) {
  os << kBenchHeader << '\n';
  for (const auto& r : records) os << format_bench_row(r) << '\n';
}

}  // namespace hylog
