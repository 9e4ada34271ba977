// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

// Joint dehazing network: a shared encoder feeding a reflectance decoder,
// a shading decoder and a dehazing decoder. The dehazing decoder receives
// the other two decoders' same-stage features through CFSM (or plain
// summation) at every stage and at the bottleneck.
//
// Stage indexing: e^0 is full resolution with C0 channels; e^z has
// resolution /2^z and 2^z*C0 channels. Every decoder feature d^z matches
// e^z in shape.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hylog/cfsm.hpp"
#include "hylog/hylog_block.hpp"

namespace hylog {

enum class DecoderMode { full, without_rs, with_r, with_s };
enum class FusionMode { cfsm, sum };

inline const char* to_string(DecoderMode m) {
  switch (m) {
    case DecoderMode::full: return "full";
    case DecoderMode::without_rs: return "w/o-RS";
    case DecoderMode::with_r: return "w-R";
    case DecoderMode::with_s: return "w-S";
  }
  return "?";
}

inline const char* to_string(FusionMode m) { return m == FusionMode::cfsm ? "cfsm" : "sum"; }

struct ModelConfig {
  std::size_t height = 64, width = 64;
  std::size_t stages = 3;
  std::size_t base_channels = 16;
  std::size_t input_channels = 3;
  // Preferred number of local windows per side; coarser stages fall back
  // to the largest of grid/2, grid/4, ... that divides the stage extent.
  std::size_t grid_per_side = 8;
  std::size_t global_downscale = 2;
  BlockKind backbone = BlockKind::hybrid;
  DecoderMode decoders = DecoderMode::full;
  FusionMode fusion = FusionMode::cfsm;
  bool pos_encoding = false;
  std::size_t vit_depth = 1;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t cfsm_reduction = 4;

  bool has_reflectance() const { return decoders == DecoderMode::full || decoders == DecoderMode::with_r; }
  bool has_shading() const { return decoders == DecoderMode::full || decoders == DecoderMode::with_s; }
  bool has_fusion() const { return decoders != DecoderMode::without_rs; }

  std::size_t channels_at(std::size_t z) const { return base_channels << z; }

  // Block geometry at stage resolution /2^z.
  HyLoGConfig stage_geometry(std::size_t z) const {
    HyLoGConfig g;
    g.height = height >> z;
    g.width = width >> z;
    g.channels = channels_at(z);
    g.global_downscale = global_downscale;
    g.heads = heads;
    g.mlp_ratio = mlp_ratio;
    g.depth = vit_depth;
    g.pos_encoding = pos_encoding;
    std::size_t grid = grid_per_side;
    while (grid > 1 && (g.height % grid != 0 || g.width % grid != 0)) grid /= 2;
    if (grid == 0) grid = 1;
    g.window = g.height / grid;
    if (g.width % g.window != 0) {
      throw ShapeError("stage " + std::to_string(z) + " extent " + std::to_string(g.height) + "x" +
                       std::to_string(g.width) + " admits no square window grid");
    }
    return g;
  }

  void validate() const {
    if (stages == 0) throw ShapeError("model needs at least one stage");
    if (base_channels == 0 || input_channels == 0) throw ShapeError("channel counts must be positive");
    const std::size_t unit = std::size_t{1} << stages;
    if (height % unit != 0 || width % unit != 0) {
      throw ShapeError("input " + std::to_string(height) + "x" + std::to_string(width) + " not divisible by 2^" +
                       std::to_string(stages));
    }
    for (std::size_t z = 0; z <= stages; ++z) {
      auto g = stage_geometry(z);
      if (backbone != BlockKind::cnn) {
        if (g.channels % heads != 0) {
          throw ShapeError("stage " + std::to_string(z) + " width " + std::to_string(g.channels) +
                           " not divisible by " + std::to_string(heads) + " heads");
        }
        g.validate();
      }
    }
    if (has_fusion() && fusion == FusionMode::cfsm) {
      for (std::size_t z = 1; z <= stages; ++z) {
        if (channels_at(z) % cfsm_reduction != 0) {
          throw ShapeError("CFSM width " + std::to_string(channels_at(z)) + " not divisible by reduction " +
                           std::to_string(cfsm_reduction));
        }
      }
    }
  }
};

// Fusion site: CFSM or plain summation.
template <typename T>
class Fusion {
 public:
  Fusion() = default;
  Fusion(ParamStore<T>& store, const std::string& name, const ModelConfig& cfg, std::size_t channels, Rng& rng)
      : mode_(cfg.fusion) {
    if (mode_ == FusionMode::cfsm) cfsm = Cfsm<T>(store, name, channels, cfg.cfsm_reduction, rng);
  }

  Tensor<T> operator()(const Tensor<T>& d_prev, const Tensor<T>& d_r, const Tensor<T>& d_s) const {
    return mode_ == FusionMode::cfsm ? cfsm(d_prev, d_r, d_s) : fuse_sum(d_prev, d_r, d_s);
  }

  FusionMode mode() const { return mode_; }
  Cfsm<T> cfsm;

 private:
  FusionMode mode_ = FusionMode::cfsm;
};

// Plain convolution followed by activation normalization and relu.
template <typename T>
struct ConvUnit {
  Conv2d<T> conv;
  ActNorm<T> norm;
  Tensor<T> operator()(const Tensor<T>& x, Phase phase) { return relu(norm(conv(x), phase)); }
};

template <typename T>
struct UpUnit {
  ConvTranspose2d<T> conv;
  ActNorm<T> norm;
  Tensor<T> operator()(const Tensor<T>& x, Phase phase) { return relu(norm(conv(x), phase)); }
};

template <typename T>
class Encoder {
 public:
  Encoder() = default;
  Encoder(ParamStore<T>& store, const ModelConfig& cfg, Rng& rng) {
    const std::size_t c0 = cfg.base_channels;
    extract = {Conv2d<T>(store, "encoder.extract.conv", 5, cfg.input_channels, c0, 1, 2, rng),
               ActNorm<T>(store, "encoder.extract.norm", c0)};
    extract_res = ResidualBlock<T>(store, "encoder.extract.res", c0, rng);
    for (std::size_t z = 1; z <= cfg.stages; ++z) {
      const std::string name = "encoder.stage" + std::to_string(z);
      blocks.emplace_back(store, name + ".block", cfg.backbone, cfg.stage_geometry(z - 1), rng);
      downs.push_back({Conv2d<T>(store, name + ".down", 4, cfg.channels_at(z - 1), cfg.channels_at(z), 2, 1, rng),
                       ActNorm<T>(store, name + ".down_norm", cfg.channels_at(z))});
    }
  }

  // Returns e^0 followed by e^1..e^Z.
  std::vector<Tensor<T>> forward(const Tensor<T>& image, Phase phase) {
    std::vector<Tensor<T>> feats;
    feats.push_back(extract_res.forward(extract(image, phase), phase));
    for (std::size_t z = 0; z < blocks.size(); ++z) feats.push_back(downs[z](blocks[z].forward(feats.back(), phase), phase));
    return feats;
  }

  ConvUnit<T> extract;
  ResidualBlock<T> extract_res;
  std::vector<StageBlock<T>> blocks;
  std::vector<ConvUnit<T>> downs;
};

// U-shaped decoder machinery shared by all three decoders.
template <typename T>
class Decoder {
 public:
  Decoder() = default;
  Decoder(ParamStore<T>& store, const std::string& name, const ModelConfig& cfg, Rng& rng) {
    const std::size_t zmax = cfg.stages;
    bottleneck = StageBlock<T>(store, name + ".stage" + std::to_string(zmax) + ".block", cfg.backbone,
                               cfg.stage_geometry(zmax), rng);
    // stage z (1 <= z < Z): upscale d^{z+1}, merge with e^z, block.
    ups.resize(zmax);
    merges.resize(zmax);
    blocks.resize(zmax);
    for (std::size_t z = zmax - 1; z >= 1; --z) {
      const std::string s = name + ".stage" + std::to_string(z);
      const std::size_t c = cfg.channels_at(z);
      ups[z] = {ConvTranspose2d<T>(store, s + ".up", 4, 2 * c, c, 2, 1, rng), ActNorm<T>(store, s + ".up_norm", c)};
      merges[z] = {Conv2d<T>(store, s + ".merge", 3, 2 * c, c, 1, 1, rng), ActNorm<T>(store, s + ".merge_norm", c)};
      blocks[z] = StageBlock<T>(store, s + ".block", cfg.backbone, cfg.stage_geometry(z), rng);
    }
    const std::size_t c0 = cfg.base_channels;
    head_up = {ConvTranspose2d<T>(store, name + ".head.up", 4, 2 * c0, c0, 2, 1, rng),
               ActNorm<T>(store, name + ".head.up_norm", c0)};
    head_out = Conv2d<T>(store, name + ".head.out", 3, 2 * c0, cfg.input_channels, 1, 1, rng);
  }

  Tensor<T> bottleneck_stage(const Tensor<T>& x, Phase phase) { return bottleneck.forward(x, phase); }

  Tensor<T> stage(std::size_t z, const Tensor<T>& prev, const Tensor<T>& skip, Phase phase) {
    auto up = ups[z](prev, phase);
    return blocks[z].forward(merges[z](concat<T>({up, skip}, up.rank() - 1), phase), phase);
  }

  Tensor<T> head(const Tensor<T>& d1, const Tensor<T>& e0, Phase phase) {
    auto up = head_up(d1, phase);
    return sigmoid(head_out(concat<T>({up, e0}, up.rank() - 1)));
  }

  StageBlock<T> bottleneck;
  std::vector<UpUnit<T>> ups;
  std::vector<ConvUnit<T>> merges;
  std::vector<StageBlock<T>> blocks;
  UpUnit<T> head_up;
  Conv2d<T> head_out;
};

template <typename T>
struct NetworkOutputs {
  std::optional<Tensor<T>> reflectance, shading;
  Tensor<T> dehazed;
  // encoder[z] = e^z for z = 0..Z; decoder_x[z] = d^z for z = 1..Z (index 0 unused).
  std::vector<Tensor<T>> encoder, decoder_r, decoder_s, decoder_d;
};

template <typename T>
class DehazeNet {
 public:
  explicit DehazeNet(const ModelConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg.validate();
    Rng rng(seed);
    encoder = Encoder<T>(store, cfg, rng);
    if (cfg.has_reflectance()) decoder_r.emplace(store, "decoder_r", cfg, rng);
    if (cfg.has_shading()) decoder_s.emplace(store, "decoder_s", cfg, rng);
    decoder_d = Decoder<T>(store, "decoder_d", cfg, rng);
    if (cfg.has_fusion()) {
      // fusions[z] fuses (d_D^z, d_R^z, d_S^z) for z = 1..Z; fusions[Z+1]
      // is the bottleneck site fusing (e^Z, d_R^Z, d_S^Z).
      fusions.resize(cfg.stages + 2);
      for (std::size_t z = 1; z <= cfg.stages; ++z)
        fusions[z] = Fusion<T>(store, "decoder_d.fuse" + std::to_string(z), cfg, cfg.channels_at(z), rng);
      fusions[cfg.stages + 1] =
          Fusion<T>(store, "decoder_d.fuse_bottleneck", cfg, cfg.channels_at(cfg.stages), rng);
    }
  }

  DehazeNet(const DehazeNet&) = delete;
  DehazeNet& operator=(const DehazeNet&) = delete;

  const ModelConfig& config() const { return cfg_; }

  std::vector<Tensor<T>> encode(const Tensor<T>& image, Phase phase) {
    check_input(image);
    return encoder.forward(image, phase);
  }

  NetworkOutputs<T> forward(const Tensor<T>& image, Phase phase) {
    NetworkOutputs<T> out;
    out.encoder = encode(image, phase);
    const std::size_t zmax = cfg_.stages;
    const auto& e = out.encoder;

    auto run_plain = [&](Decoder<T>& dec, std::vector<Tensor<T>>& feats) {
      feats.assign(zmax + 1, Tensor<T>());
      feats[zmax] = dec.bottleneck_stage(e[zmax], phase);
      for (std::size_t z = zmax - 1; z >= 1; --z) feats[z] = dec.stage(z, feats[z + 1], e[z], phase);
      return dec.head(feats[1], e[0], phase);
    };
    if (decoder_r) out.reflectance = run_plain(*decoder_r, out.decoder_r);
    if (decoder_s) out.shading = run_plain(*decoder_s, out.decoder_s);

    if (!cfg_.has_fusion()) {
      out.dehazed = run_plain(decoder_d, out.decoder_d);
      return out;
    }

    // Disabled complementary streams contribute zeros.
    auto stream = [&](const std::vector<Tensor<T>>& feats, std::size_t z) {
      return feats.empty() ? Tensor<T>::zeros(e[z].shape()) : feats[z];
    };
    auto& dd = out.decoder_d;
    dd.assign(zmax + 1, Tensor<T>());
    auto fused = fusions[zmax + 1](e[zmax], stream(out.decoder_r, zmax), stream(out.decoder_s, zmax));
    dd[zmax] = decoder_d.bottleneck_stage(fused, phase);
    for (std::size_t z = zmax - 1; z >= 1; --z) {
      fused = fusions[z + 1](dd[z + 1], stream(out.decoder_r, z + 1), stream(out.decoder_s, z + 1));
      dd[z] = decoder_d.stage(z, fused, e[z], phase);
    }
    fused = fusions[1](dd[1], stream(out.decoder_r, 1), stream(out.decoder_s, 1));
    out.dehazed = decoder_d.head(fused, e[0], phase);
    return out;
  }

  bool actnorm_initialized() const { return store.all_initialized(); }
  void mark_actnorm_initialized() { store.mark_all_initialized(); }

  ParamStore<T> store;
  Encoder<T> encoder;
  std::optional<Decoder<T>> decoder_r, decoder_s;
  Decoder<T> decoder_d;
  std::vector<Fusion<T>> fusions;

 private:
  void check_input(const Tensor<T>& image) const {
    const MapDims d = map_dims(image.shape(), "network input");
    if (d.h != cfg_.height || d.w != cfg_.width || d.c != cfg_.input_channels) {
      throw ShapeError("network built for " + std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width) + "x" +
                       std::to_string(cfg_.input_channels) + " images, got " + to_string(image.shape()));
    }
  }

  ModelConfig cfg_;
};

}  // namespace hylog
