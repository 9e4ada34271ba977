// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

// Hybrid local-global transformer block: windowed self-attention on M x M
// regions in parallel with self-attention on an average-pooled copy of the
// map, fused by a 3x3 convolution over the channel concatenation. Also the
// ablation variants that replace it inside the network.

#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "hylog/vit.hpp"

namespace hylog {

struct HyLoGConfig {
  std::size_t height = 0, width = 0, channels = 0;
  // Side length M of a local window.
  std::size_t window = 1;
  // Per-side pooling factor s of the global path; tokens shrink by s*s.
  std::size_t global_downscale = 2;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t depth = 1;
  bool pos_encoding = false;

  std::size_t grid_per_side() const { return height / window; }
  std::size_t window_count() const { return (height / window) * (width / window); }
  std::size_t token_reduction() const { return global_downscale * global_downscale; }

  void validate() const {
    if (height == 0 || width == 0 || channels == 0) throw ShapeError("HyLoG geometry must be non-empty");
    if (window == 0 || height % window != 0 || width % window != 0) {
      throw ShapeError("window " + std::to_string(window) + " does not divide " + std::to_string(height) + "x" +
                       std::to_string(width));
    }
    if (global_downscale == 0 || height % global_downscale != 0 || width % global_downscale != 0) {
      throw ShapeError("global downscale " + std::to_string(global_downscale) + " does not divide " +
                       std::to_string(height) + "x" + std::to_string(width));
    }
  }

  ViTConfig vit(std::size_t tokens) const { return {channels, heads, mlp_ratio, tokens, pos_encoding}; }
};

// Stacked non-overlapping windows plus the grid needed to undo the split.
template <typename T>
struct Windows {
  Tensor<T> maps;  // (N * grid_h * grid_w, M, M, C), row-major grid order per sample
  std::size_t batch = 1, grid_h = 0, grid_w = 0;
  bool batched = false;

  std::size_t count() const { return maps.dim(0); }
};

template <typename T>
Windows<T> window_partition(const Tensor<T>& x, std::size_t m) {
  const MapDims d = map_dims(x.shape(), "window_partition");
  if (m == 0 || d.h % m != 0 || d.w % m != 0) {
    throw ShapeError("window size " + std::to_string(m) + " does not divide " + to_string(x.shape()));
  }
  const std::size_t gh = d.h / m, gw = d.w / m;
  auto index = std::make_shared<std::vector<std::size_t>>(x.numel());
  std::size_t o = 0;
  for (std::size_t b = 0; b < d.n; ++b)
    for (std::size_t wy = 0; wy < gh; ++wy)
      for (std::size_t wx = 0; wx < gw; ++wx)
        for (std::size_t iy = 0; iy < m; ++iy)
          for (std::size_t ix = 0; ix < m; ++ix)
            for (std::size_t c = 0; c < d.c; ++c)
              (*index)[o++] = ((b * d.h + wy * m + iy) * d.w + wx * m + ix) * d.c + c;
  return {gather(x, Shape{d.n * gh * gw, m, m, d.c}, std::move(index)), d.n, gh, gw, d.batched};
}

template <typename T>
Tensor<T> window_merge(const Windows<T>& ws) {
  const Shape& s = ws.maps.shape();
  if (s.size() != 4 || s[1] != s[2] || s[0] != ws.batch * ws.grid_h * ws.grid_w) {
    throw ShapeError("window stack " + to_string(s) + " does not match its grid");
  }
  const std::size_t m = s[1], c = s[3];
  const std::size_t h = ws.grid_h * m, w = ws.grid_w * m;
  auto index = std::make_shared<std::vector<std::size_t>>(ws.maps.numel());
  std::size_t o = 0;
  for (std::size_t b = 0; b < ws.batch; ++b)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t k = 0; k < c; ++k)
          (*index)[o++] = ((((b * ws.grid_h + y / m) * ws.grid_w + x / m) * m + y % m) * m + x % m) * c + k;
  Shape out = ws.batched ? Shape{ws.batch, h, w, c} : Shape{h, w, c};
  return gather(ws.maps, std::move(out), std::move(index));
}

template <typename T>
class HyLoGBlock {
 public:
  HyLoGBlock() = default;
  HyLoGBlock(ParamStore<T>& store, const std::string& name, const HyLoGConfig& cfg, Rng& rng,
             bool with_local = true, bool with_global = true, bool with_fuse = true)
      : cfg_(cfg) {
    cfg.validate();
    if (with_local) local_vit = ViTStack<T>(store, name + ".local", cfg.vit(cfg.window * cfg.window), cfg.depth, rng);
    if (with_global) {
      const std::size_t pooled = (cfg.height / cfg.global_downscale) * (cfg.width / cfg.global_downscale);
      global_vit = ViTStack<T>(store, name + ".global", cfg.vit(pooled), cfg.depth, rng);
    }
    if (with_fuse) fuse = Conv2d<T>(store, name + ".fuse", 3, 2 * cfg.channels, cfg.channels, 1, 1, rng);
  }

  const HyLoGConfig& config() const { return cfg_; }

  // Shared local ViT applied to every M x M window independently.
  Tensor<T> local_path(const Tensor<T>& x) const {
    auto ws = window_partition(x, cfg_.window);
    const std::size_t m = cfg_.window;
    auto tokens = reshape(ws.maps, Shape{ws.count(), m * m, cfg_.channels});
    ws.maps = reshape(local_vit.forward(tokens), Shape{ws.count(), m, m, cfg_.channels});
    return window_merge(ws);
  }

  // Average-pool by s, global ViT over the pooled tokens, bilinear upsample by s.
  Tensor<T> global_path(const Tensor<T>& x) const {
    auto pooled = avgpool2d(x, cfg_.global_downscale);
    auto t = tokenize(pooled);
    if (t.tokens.rank() == 2) t.tokens = reshape(t.tokens, Shape{1, t.length(), cfg_.channels});
    auto y = global_vit.forward(t.tokens);
    auto back = reshape(y, pooled.shape());
    return upsample2d(back, cfg_.global_downscale);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    check(x);
    auto xl = local_path(x);
    auto xg = global_path(x);
    return fuse(concat<T>({xl, xg}, x.rank() - 1));
  }

  void check(const Tensor<T>& x) const {
    const MapDims d = map_dims(x.shape(), "hylog_block");
    if (d.h != cfg_.height || d.w != cfg_.width || d.c != cfg_.channels) {
      throw ShapeError("HyLoG block built for " + std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width) +
                       "x" + std::to_string(cfg_.channels) + ", got " + to_string(x.shape()));
    }
  }

  ViTStack<T> local_vit, global_vit;
  Conv2d<T> fuse;

 private:
  HyLoGConfig cfg_;
};

// x + conv(relu(actnorm(conv(x)))) with 3x3 same-size convolutions.
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(ParamStore<T>& store, const std::string& name, std::size_t channels, Rng& rng)
      : conv1(store, name + ".conv1", 3, channels, channels, 1, 1, rng),
        norm(store, name + ".norm", channels),
        conv2(store, name + ".conv2", 3, channels, channels, 1, 1, rng) {}

  Tensor<T> forward(const Tensor<T>& x, Phase phase) { return add(x, conv2(relu(norm(conv1(x), phase)))); }

  Conv2d<T> conv1;
  ActNorm<T> norm;
  Conv2d<T> conv2;
};

enum class BlockKind { cnn, vit, local, global, sequential, hybrid };

inline const char* to_string(BlockKind k) {
  switch (k) {
    case BlockKind::cnn: return "cnn";
    case BlockKind::vit: return "vit";
    case BlockKind::local: return "local";
    case BlockKind::global: return "global";
    case BlockKind::sequential: return "sequential";
    case BlockKind::hybrid: return "hybrid";
  }
  return "?";
}

// One feature-processing block of the network, selectable for ablations.
// All kinds preserve H x W x C.
template <typename T>
class StageBlock {
 public:
  StageBlock() = default;
  StageBlock(ParamStore<T>& store, const std::string& name, BlockKind kind, const HyLoGConfig& cfg, Rng& rng)
      : kind_(kind), cfg_(cfg) {
    cfg.validate();
    switch (kind) {
      case BlockKind::cnn:
        res.emplace_back(store, name + ".res0", cfg.channels, rng);
        res.emplace_back(store, name + ".res1", cfg.channels, rng);
        break;
      case BlockKind::vit:
        full_vit = ViTStack<T>(store, name + ".vit", cfg.vit(cfg.height * cfg.width), cfg.depth, rng);
        break;
      case BlockKind::local:
        hylog = HyLoGBlock<T>(store, name, cfg, rng, true, false, false);
        break;
      case BlockKind::global:
        hylog = HyLoGBlock<T>(store, name, cfg, rng, false, true, false);
        break;
      case BlockKind::sequential:
        hylog = HyLoGBlock<T>(store, name, cfg, rng, true, true, false);
        break;
      case BlockKind::hybrid:
        hylog = HyLoGBlock<T>(store, name, cfg, rng);
        break;
    }
  }

  BlockKind kind() const { return kind_; }
  const HyLoGConfig& config() const { return cfg_; }

  Tensor<T> forward(const Tensor<T>& x, Phase phase) {
    const MapDims d = map_dims(x.shape(), "stage block");
    if (d.h != cfg_.height || d.w != cfg_.width || d.c != cfg_.channels) {
      throw ShapeError(std::string(to_string(kind_)) + " block built for " + std::to_string(cfg_.height) + "x" +
                       std::to_string(cfg_.width) + "x" + std::to_string(cfg_.channels) + ", got " +
                       to_string(x.shape()));
    }
    switch (kind_) {
      case BlockKind::cnn: {
        Tensor<T> h = x;
        for (auto& r : res) h = r.forward(h, phase);
        return h;
      }
      case BlockKind::vit: {
        auto t = tokenize(x);
        return detokenize(TokenSeq<T>{full_vit.forward(t.tokens), t.height, t.width});
      }
      case BlockKind::local: return hylog.local_path(x);
      case BlockKind::global: return hylog.global_path(x);
      case BlockKind::sequential: return hylog.global_path(hylog.local_path(x));
      case BlockKind::hybrid: return hylog.forward(x);
    }
    return x;
  }

  HyLoGBlock<T> hylog;
  ViTStack<T> full_vit;
  std::vector<ResidualBlock<T>> res;

 private:
  BlockKind kind_ = BlockKind::hybrid;
  HyLoGConfig cfg_;
};

}  // namespace hylog
