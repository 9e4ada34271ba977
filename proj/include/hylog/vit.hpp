// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

// Standard pre-norm ViT block over one-pixel tokens.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hylog/layers.hpp"

namespace hylog {

// Tokens are (L, C) or a batch (B, L, C); `height * width == L`.
template <typename T>
struct TokenSeq {
  Tensor<T> tokens;
  std::size_t height = 0, width = 0;

  std::size_t length() const { return height * width; }
};

// Row-major raster flattening of an (H,W,C) or (N,H,W,C) map.
template <typename T>
TokenSeq<T> tokenize(const Tensor<T>& x) {
  const MapDims d = map_dims(x.shape(), "tokenize");
  Shape s = d.batched ? Shape{d.n, d.h * d.w, d.c} : Shape{d.h * d.w, d.c};
  return {reshape(x, std::move(s)), d.h, d.w};
}

template <typename T>
Tensor<T> detokenize(const TokenSeq<T>& t) {
  const Shape& s = t.tokens.shape();
  if ((s.size() != 2 && s.size() != 3) || s[s.size() - 2] != t.length()) {
    throw ShapeError("token sequence " + to_string(s) + " does not match origin " + std::to_string(t.height) + "x" +
                     std::to_string(t.width));
  }
  const std::size_t c = s.back();
  Shape out = s.size() == 3 ? Shape{s[0], t.height, t.width, c} : Shape{t.height, t.width, c};
  return reshape(t.tokens, std::move(out));
}

struct ViTConfig {
  std::size_t dim = 16;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  // Token count per sequence; only used to size the positional table.
  std::size_t tokens = 0;
  bool pos_encoding = false;
};

template <typename T>
class ViTBlock {
 public:
  ViTBlock() = default;
  ViTBlock(ParamStore<T>& store, const std::string& name, const ViTConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.heads == 0 || cfg.dim % cfg.heads != 0) {
      throw ShapeError("ViT width " + std::to_string(cfg.dim) + " not divisible by " + std::to_string(cfg.heads) +
                       " heads");
    }
    const std::size_t hidden = cfg.mlp_ratio * cfg.dim;
    ln1 = LayerNorm<T>(store, name + ".ln1", cfg.dim);
    q = Linear<T>(store, name + ".attn.q", cfg.dim, cfg.dim, rng);
    k = Linear<T>(store, name + ".attn.k", cfg.dim, cfg.dim, rng);
    v = Linear<T>(store, name + ".attn.v", cfg.dim, cfg.dim, rng);
    proj = Linear<T>(store, name + ".attn.proj", cfg.dim, cfg.dim, rng);
    ln2 = LayerNorm<T>(store, name + ".ln2", cfg.dim);
    mlp_in = Linear<T>(store, name + ".mlp.in", cfg.dim, hidden, rng);
    mlp_out = Linear<T>(store, name + ".mlp.out", hidden, cfg.dim, rng);
    if (cfg.pos_encoding) {
      if (cfg.tokens == 0) throw ShapeError("positional encoding needs a fixed token count");
      pos_embed = store.uniform(name + ".pos_embed", {cfg.tokens, cfg.dim}, T(0.02), rng);
    }
  }

  const ViTConfig& config() const { return cfg_; }

  // Multi-head self-attention on (B, L, C) tokens, including the output projection.
  Tensor<T> mhsa(const Tensor<T>& x) const {
    check_width(x);
    auto batched = as_batch(x);
    auto out = proj(scaled_dot_product_attention(q(batched), k(batched), v(batched), cfg_.heads));
    return reshape(out, x.shape());
  }

  // Row-stochastic attention weights (B, heads, L, L) for the given input.
  Tensor<T> attention_weights(const Tensor<T>& x) const {
    NoGradGuard guard;
    auto batched = as_batch(x);
    return attention_probabilities(q(batched), k(batched), cfg_.heads);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    check_width(x);
    Tensor<T> h = x;
    if (pos_embed.defined()) {
      if (x.dim(x.rank() - 2) != pos_embed.dim(0)) {
        throw ShapeError("positional table has " + std::to_string(pos_embed.dim(0)) + " rows but sequence " +
                         to_string(x.shape()));
      }
      h = add(h, pos_embed);
    }
    h = add(h, mhsa(ln1(h)));
    return add(h, mlp_out(gelu(mlp_in(ln2(h)))));
  }

  TokenSeq<T> operator()(const TokenSeq<T>& t) const { return {forward(t.tokens), t.height, t.width}; }

  LayerNorm<T> ln1, ln2;
  Linear<T> q, k, v, proj, mlp_in, mlp_out;
  Tensor<T> pos_embed;

 private:
  void check_width(const Tensor<T>& x) const {
    if (x.rank() < 2 || x.shape().back() != cfg_.dim) {
      throw ShapeError("token width mismatch: expected " + std::to_string(cfg_.dim) + ", got " + to_string(x.shape()));
    }
  }
  static Tensor<T> as_batch(const Tensor<T>& x) {
    return x.rank() == 3 ? x : reshape(x, Shape{1, x.dim(0), x.dim(1)});
  }

  ViTConfig cfg_;
};

// Vit(.) with a configurable number of stacked blocks.
template <typename T>
class ViTStack {
 public:
  ViTStack() = default;
  ViTStack(ParamStore<T>& store, const std::string& name, const ViTConfig& cfg, std::size_t depth, Rng& rng) {
    for (std::size_t i = 0; i < depth; ++i) blocks.emplace_back(store, name + "." + std::to_string(i), cfg, rng);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> h = x;
    for (const auto& b : blocks) h = b.forward(h);
    return h;
  }

  std::vector<ViTBlock<T>> blocks;
};

}  // namespace hylog
