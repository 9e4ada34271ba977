// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

// Central finite-difference verification of reverse-mode gradients, plus
// a named suite covering every differentiable op and composite.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hylog/losses.hpp"
#include "hylog/network.hpp"

namespace hylog {

struct GradCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-4;
  // Gradients smaller than this are compared on an absolute scale.
  double floor = 1e-3;
  // Tensors larger than this are checked on a random subset of coordinates.
  std::size_t max_coords = 16;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  std::string module, name;
  double max_error = 0;  // |fd - an| / max(floor, |an|)
  std::size_t coords = 0;
  std::string worst;  // leaf and coordinate of max_error
  bool pass = false;
};

using Leaves = std::vector<std::pair<std::string, Tensor<double>>>;

// Compares d<out, R>/d(leaf) against central differences, R a fixed random
// projection scaled so the objective stays O(1).
inline GradCheckResult check_gradients(const std::function<Tensor<double>()>& f, const Leaves& leaves,
                                       const GradCheckOptions& opt = {}) {
  GradCheckResult r;
  Tensor<double> out = f();
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> proj(out.numel());
  const double s = 1.0 / std::sqrt(static_cast<double>(out.numel()));
  for (auto& p : proj) p = u(rng) * s;
  const Tensor<double> projection(out.shape(), proj);

  auto objective = [&] {
    NoGradGuard guard;
    const Tensor<double> y = f();
    double acc = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) acc += y[i] * proj[i];
    return acc;
  };

  for (const auto& [name, t] : leaves) Tensor<double>(t).zero_grad();
  sum(mul(out, projection)).backward();

  double worst = 0;
  for (const auto& [name, leaf] : leaves) {
    Tensor<double> t = leaf;
    std::vector<double> an(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), an.begin());
    std::vector<std::size_t> coords(t.numel());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (coords.size() > opt.max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      auto data = t.mutable_data();
      const double orig = data[i];
      data[i] = orig + opt.step;
      const double plus = objective();
      data = t.mutable_data();
      data[i] = orig - opt.step;
      const double minus = objective();
      data = t.mutable_data();
      data[i] = orig;
      const double fd = (plus - minus) / (2 * opt.step);
      const double err = std::abs(fd - an[i]) / std::max(opt.floor, std::abs(an[i]));
      ++r.coords;
      if (err > worst || (std::isnan(err) && !std::isnan(worst))) {
        worst = err;
        r.worst = name + "[" + std::to_string(i) + "] fd=" + std::to_string(fd) + " an=" + std::to_string(an[i]);
      }
    }
  }
  r.max_error = worst;
  r.pass = std::isfinite(worst) && worst < opt.tolerance;
  return r;
}

struct GradCase {
  std::string module, name;
  std::function<GradCheckResult(const GradCheckOptions&)> run;
};

namespace detail {

inline Tensor<double> random_leaf(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numel_of(s));
  for (auto& x : v) x = u(rng);
  return Tensor<double>::parameter(std::move(s), std::move(v));
}

// Values bounded away from zero by `gap`, for ops with a kink at zero.
inline Tensor<double> leaf_avoiding_zero(Shape s, std::mt19937_64& rng, double gap = 0.05) {
  std::uniform_real_distribution<double> u(gap, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(numel_of(s));
  for (auto& x : v) x = sign(rng) ? u(rng) : -u(rng);
  return Tensor<double>::parameter(std::move(s), std::move(v));
}

inline Leaves store_leaves(const ParamStore<double>& store) {
  Leaves out;
  for (const auto& [name, t] : store.entries()) out.emplace_back(name, t);
  return out;
}

inline GradCase make_case(std::string module, std::string name,
                          std::function<GradCheckResult(const GradCheckOptions&)> run) {
  return {std::move(module), std::move(name), std::move(run)};
}

// Builds a case from a factory that returns (forward closure, leaves).
template <typename Setup>
GradCase simple(std::string module, std::string name, Setup setup) {
  return make_case(module, name, [module, name, setup](const GradCheckOptions& opt) {
    std::mt19937_64 rng(opt.seed);
    auto [f, leaves] = setup(rng);
    auto r = check_gradients(f, leaves, opt);
    r.module = module;
    r.name = name;
    return r;
  });
}

using Setup = std::pair<std::function<Tensor<double>()>, Leaves>;

}  // namespace detail

// Small geometries keep the whole suite well inside a few minutes on one core.
inline std::vector<GradCase> gradient_suite() {
  using detail::random_leaf;
  using detail::leaf_avoiding_zero;
  using detail::Setup;
  using detail::simple;
  std::vector<GradCase> cases;
  auto add_case = [&](const char* module, const char* name, std::function<Setup(std::mt19937_64&)> setup) {
    cases.push_back(simple(module, name, std::move(setup)));
  };

  // ---- tensor-core ----
  add_case("tensor-core", "add_broadcast", [](auto& rng) -> Setup {
    auto a = random_leaf({2, 3, 4}, rng), b = random_leaf({4}, rng);
    return {[=] { return add(a, b); }, {{"a", a}, {"b", b}}};
  });
  add_case("tensor-core", "sub_broadcast", [](auto& rng) -> Setup {
    auto a = random_leaf({2, 3, 4}, rng), b = random_leaf({3, 1}, rng);
    return {[=] { return sub(a, b); }, {{"a", a}, {"b", b}}};
  });
  add_case("tensor-core", "mul_broadcast", [](auto& rng) -> Setup {
    auto a = random_leaf({2, 3, 4}, rng), b = random_leaf({2, 1, 4}, rng);
    return {[=] { return mul(a, b); }, {{"a", a}, {"b", b}}};
  });
  add_case("tensor-core", "div", [](auto& rng) -> Setup {
    auto a = random_leaf({3, 4}, rng), b = random_leaf({3, 4}, rng, 0.5, 1.5);
    return {[=] { return div(a, b); }, {{"a", a}, {"b", b}}};
  });
  add_case("tensor-core", "scale_shift_square", [](auto& rng) -> Setup {
    auto a = random_leaf({5, 3}, rng);
    return {[=] { return square(add_scalar(scale(a, 1.7), -0.3)); }, {{"a", a}}};
  });
  add_case("tensor-core", "relu", [](auto& rng) -> Setup {
    auto a = leaf_avoiding_zero({4, 5}, rng);
    return {[=] { return relu(a); }, {{"a", a}}};
  });
  add_case("tensor-core", "sigmoid", [](auto& rng) -> Setup {
    auto a = random_leaf({4, 5}, rng, -4, 4);
    return {[=] { return sigmoid(a); }, {{"a", a}}};
  });
  add_case("tensor-core", "gelu", [](auto& rng) -> Setup {
    auto a = random_leaf({4, 5}, rng, -3, 3);
    return {[=] { return gelu(a); }, {{"a", a}}};
  });
  add_case("tensor-core", "sum_mean", [](auto& rng) -> Setup {
    auto a = random_leaf({3, 4}, rng);
    return {[=] { return add(sum(a), scale(mean(square(a)), 3.0)); }, {{"a", a}}};
  });
  add_case("tensor-core", "norm_per_sample", [](auto& rng) -> Setup {
    auto a = random_leaf({3, 4, 2}, rng);
    return {[=] { return norm_per_sample(a); }, {{"a", a}}};
  });
  add_case("tensor-core", "reshape_permute", [](auto& rng) -> Setup {
    auto a = random_leaf({2, 3, 4}, rng);
    return {[=] { return permute(reshape(a, Shape{6, 4}), {1, 0}); }, {{"a", a}}};
  });
  add_case("tensor-core", "concat", [](auto& rng) -> Setup {
    auto a = random_leaf({2, 3, 2}, rng), b = random_leaf({2, 3, 3}, rng);
    return {[=] { return concat<double>({a, b}, 2); }, {{"a", a}, {"b", b}}};
  });
  add_case("tensor-core", "matmul", [](auto& rng) -> Setup {
    auto a = random_leaf({3, 4}, rng), b = random_leaf({4, 5}, rng);
    return {[=] { return matmul(a, b); }, {{"a", a}, {"b", b}}};
  });
  add_case("tensor-core", "linear", [](auto& rng) -> Setup {
    auto x = random_leaf({2, 3, 4}, rng), w = random_leaf({4, 5}, rng), b = random_leaf({5}, rng);
    return {[=] { return linear(x, w, b); }, {{"x", x}, {"w", w}, {"b", b}}};
  });
  add_case("tensor-core", "softmax", [](auto& rng) -> Setup {
    auto a = random_leaf({3, 4, 5}, rng, -2, 2);
    return {[=] { return softmax(a, 1); }, {{"a", a}}};
  });
  add_case("tensor-core", "layernorm", [](auto& rng) -> Setup {
    auto x = random_leaf({3, 6}, rng), g = random_leaf({6}, rng), b = random_leaf({6}, rng);
    return {[=] { return layernorm(x, g, b, 1); }, {{"x", x}, {"gamma", g}, {"beta", b}}};
  });
  add_case("tensor-core", "conv2d_same", [](auto& rng) -> Setup {
    auto x = random_leaf({2, 5, 5, 3}, rng), w = random_leaf({3, 3, 3, 4}, rng), b = random_leaf({4}, rng);
    return {[=] { return conv2d(x, w, b, 1, 1); }, {{"x", x}, {"w", w}, {"b", b}}};
  });
  add_case("tensor-core", "conv2d_stride2", [](auto& rng) -> Setup {
    auto x = random_leaf({6, 6, 2}, rng), w = random_leaf({4, 4, 2, 3}, rng), b = random_leaf({3}, rng);
    return {[=] { return conv2d(x, w, b, 2, 1); }, {{"x", x}, {"w", w}, {"b", b}}};
  });
  add_case("tensor-core", "conv2d_valid", [](auto& rng) -> Setup {
    auto x = random_leaf({7, 6, 2}, rng), w = random_leaf({3, 3, 2, 2}, rng), b = random_leaf({2}, rng);
    return {[=] { return conv2d(x, w, b, 2, 0); }, {{"x", x}, {"w", w}, {"b", b}}};
  });
  add_case("tensor-core", "conv_transpose2d", [](auto& rng) -> Setup {
    auto x = random_leaf({2, 3, 3, 4}, rng), w = random_leaf({4, 4, 2, 4}, rng), b = random_leaf({2}, rng);
    return {[=] { return conv_transpose2d(x, w, b, 2, 1); }, {{"x", x}, {"w", w}, {"b", b}}};
  });
  add_case("tensor-core", "conv_transpose2d_unit", [](auto& rng) -> Setup {
    auto x = random_leaf({4, 4, 2}, rng), w = random_leaf({3, 3, 3, 2}, rng), b = random_leaf({3}, rng);
    return {[=] { return conv_transpose2d(x, w, b, 1, 1); }, {{"x", x}, {"w", w}, {"b", b}}};
  });
  add_case("tensor-core", "avgpool2d", [](auto& rng) -> Setup {
    auto x = random_leaf({2, 4, 6, 3}, rng);
    return {[=] { return avgpool2d(x, 2); }, {{"x", x}}};
  });
  add_case("tensor-core", "global_avg_pool", [](auto& rng) -> Setup {
    auto x = random_leaf({2, 3, 3, 4}, rng);
    return {[=] { return global_avg_pool(x); }, {{"x", x}}};
  });
  add_case("tensor-core", "global_max_pool", [](auto& rng) -> Setup {
    auto x = random_leaf({2, 3, 3, 4}, rng);
    return {[=] { return global_max_pool(x); }, {{"x", x}}};
  });
  add_case("tensor-core", "upsample2d", [](auto& rng) -> Setup {
    auto x = random_leaf({2, 3, 4, 2}, rng);
    return {[=] { return upsample2d(x, 2); }, {{"x", x}}};
  });
  add_case("tensor-core", "upsample2d_x3", [](auto& rng) -> Setup {
    auto x = random_leaf({3, 3, 2}, rng);
    return {[=] { return upsample2d(x, 3); }, {{"x", x}}};
  });
  add_case("tensor-core", "attention", [](auto& rng) -> Setup {
    auto q = random_leaf({2, 5, 6}, rng), k = random_leaf({2, 5, 6}, rng), v = random_leaf({2, 5, 6}, rng);
    return {[=] { return scaled_dot_product_attention(q, k, v, 2); }, {{"q", q}, {"k", k}, {"v", v}}};
  });
  add_case("tensor-core", "spatial_diff", [](auto& rng) -> Setup {
    auto x = random_leaf({2, 4, 5, 3}, rng);
    return {[=] { return concat<double>({spatial_diff_x(x), spatial_diff_y(x)}, 3); }, {{"x", x}}};
  });
  add_case("tensor-core", "correlate1d_valid", [](auto& rng) -> Setup {
    auto x = random_leaf({2, 7, 6, 2}, rng);
    std::vector<double> taps{0.2, 0.5, -0.3};
    return {[=] { return correlate1d_valid(correlate1d_valid(x, 1, taps), 2, taps); }, {{"x", x}}};
  });

  // ---- vit-block ----
  auto vit_case = [&](const char* name, bool pe, bool attention_only) {
    cases.push_back(detail::make_case("vit-block", name, [=](const GradCheckOptions& opt) {
      std::mt19937_64 rng(opt.seed);
      ParamStore<double> store;
      ViTConfig cfg{8, 2, 2, 6, pe};
      ViTBlock<double> block(store, "vit", cfg, rng);
      auto x = random_leaf({2, 6, 8}, rng);
      Leaves leaves = detail::store_leaves(store);
      leaves.emplace_back("x", x);
      auto r = check_gradients([&] { return attention_only ? block.mhsa(x) : block.forward(x); }, leaves, opt);
      r.module = "vit-block";
      r.name = name;
      return r;
    }));
  };
  vit_case("mhsa", false, true);
  vit_case("vit_block", false, false);
  vit_case("vit_block_pos_encoding", true, false);

  // ---- hylog ----
  auto hylog_case = [&](const char* name, BlockKind kind) {
    cases.push_back(detail::make_case("hylog", name, [=](const GradCheckOptions& opt) {
      std::mt19937_64 rng(opt.seed);
      ParamStore<double> store;
      HyLoGConfig cfg;
      cfg.height = cfg.width = 4;
      cfg.channels = 4;
      cfg.window = 2;
      cfg.global_downscale = 2;
      cfg.heads = 2;
      cfg.mlp_ratio = 2;
      StageBlock<double> block(store, "block", kind, cfg, rng);
      auto x = random_leaf({2, 4, 4, 4}, rng);
      {
        NoGradGuard g;
        block.forward(x, Phase::train);  // settles any data-dependent init
      }
      Leaves leaves = detail::store_leaves(store);
      leaves.emplace_back("x", x);
      auto r = check_gradients([&] { return block.forward(x, Phase::infer); }, leaves, opt);
      r.module = "hylog";
      r.name = name;
      return r;
    }));
  };
  hylog_case("local_path", BlockKind::local);
  hylog_case("global_path", BlockKind::global);
  hylog_case("hylog_block", BlockKind::hybrid);
  hylog_case("sequential_block", BlockKind::sequential);
  hylog_case("full_vit_block", BlockKind::vit);
  hylog_case("residual_cnn_block", BlockKind::cnn);
  add_case("hylog", "window_partition_merge", [](auto& rng) -> Setup {
    auto x = random_leaf({2, 4, 4, 2}, rng);
    return {[=] {
              auto ws = window_partition(x, 2);
              ws.maps = square(ws.maps);
              return window_merge(ws);
            },
            {{"x", x}}};
  });

  // ---- cfsm ----
  cases.push_back(detail::make_case("cfsm", "cfsm", [](const GradCheckOptions& opt) {
    std::mt19937_64 rng(opt.seed);
    ParamStore<double> store;
    Cfsm<double> cfsm(store, "cfsm", 8, 2, rng);
    auto d = random_leaf({2, 3, 3, 8}, rng), r_ = random_leaf({2, 3, 3, 8}, rng), s = random_leaf({2, 3, 3, 8}, rng);
    Leaves leaves = detail::store_leaves(store);
    leaves.insert(leaves.end(), {{"d_prev", d}, {"d_r", r_}, {"d_s", s}});
    auto r = check_gradients([&] { return cfsm(d, r_, s); }, leaves, opt);
    r.module = "cfsm";
    r.name = "cfsm";
    return r;
  }));
  add_case("cfsm", "fuse_sum", [](auto& rng) -> Setup {
    auto d = random_leaf({3, 3, 4}, rng), r_ = random_leaf({3, 3, 4}, rng), s = random_leaf({3, 3, 4}, rng);
    return {[=] { return fuse_sum(d, r_, s); }, {{"d_prev", d}, {"d_r", r_}, {"d_s", s}}};
  });

  // ---- dehaze-net: one-stage encoder/decoder ----
  auto net_case = [&](const char* name, DecoderMode mode, bool encoder_only) {
    cases.push_back(detail::make_case("dehaze-net", name, [=](const GradCheckOptions& opt) {
      ModelConfig cfg;
      cfg.height = cfg.width = 8;
      cfg.stages = 1;
      cfg.base_channels = 4;
      cfg.grid_per_side = 2;
      cfg.heads = 2;
      cfg.mlp_ratio = 2;
      cfg.cfsm_reduction = 2;
      cfg.decoders = mode;
      DehazeNet<double> net(cfg, opt.seed);
      std::mt19937_64 rng(opt.seed + 1);
      auto x = random_leaf({2, 8, 8, 3}, rng, 0, 1);
      {
        NoGradGuard g;
        net.forward(x, Phase::train);
      }
      Leaves leaves = detail::store_leaves(net.store);
      leaves.emplace_back("image", x);
      auto f = [&] {
        if (encoder_only) return net.encode(x, Phase::infer).back();
        auto out = net.forward(x, Phase::infer);
        if (!out.reflectance) return out.dehazed;
        return concat<double>({out.dehazed, *out.reflectance, *out.shading}, 3);
      };
      auto r = check_gradients(f, leaves, opt);
      r.module = "dehaze-net";
      r.name = name;
      return r;
    }));
  };
  net_case("encoder_1stage", DecoderMode::full, true);
  net_case("network_1stage_full", DecoderMode::full, false);
  net_case("network_1stage_without_rs", DecoderMode::without_rs, false);

  // ---- losses ----
  add_case("losses", "l2_loss", [](auto& rng) -> Setup {
    auto a = random_leaf({2, 4, 4, 3}, rng, 0, 1), b = random_leaf({2, 4, 4, 3}, rng, 0, 1);
    return {[=] { return l2_loss(a, b); }, {{"pred", a}, {"target", b}}};
  });
  add_case("losses", "ssim_loss", [](auto& rng) -> Setup {
    auto a = random_leaf({12, 13, 2}, rng, 0, 1), b = random_leaf({12, 13, 2}, rng, 0, 1);
    return {[=] { return ssim_loss(a, b); }, {{"pred", a}, {"target", b}}};
  });
  add_case("losses", "edge_loss", [](auto& rng) -> Setup {
    auto a = random_leaf({2, 5, 5, 3}, rng, 0, 1), b = random_leaf({2, 5, 5, 3}, rng, 0, 1);
    return {[=] { return edge_loss(a, b); }, {{"pred", a}, {"target", b}}};
  });
  add_case("losses", "hybrid_loss", [](auto& rng) -> Setup {
    Shape s{1, 11, 11, 3};
    auto d = random_leaf(s, rng, 0, 1), r_ = random_leaf(s, rng, 0, 1), sh = random_leaf(s, rng, 0, 1);
    auto j = random_leaf(s, rng, 0, 1).detach(), rr = random_leaf(s, rng, 0, 1).detach();
    auto ss = random_leaf(s, rng, 0, 1).detach();
    return {[=] {
              NetworkOutputs<double> out;
              out.dehazed = d;
              out.reflectance = r_;
              out.shading = sh;
              return hybrid_loss(out, LossTargets<double>{j, rr, ss}, LossWeights{}).total;
            },
            {{"dehazed", d}, {"reflectance", r_}, {"shading", sh}}};
  });
  return cases;
}

inline std::vector<std::string> gradient_suite_modules() {
  return {"tensor-core", "vit-block", "hylog", "cfsm", "dehaze-net", "losses"};
}

}  // namespace hylog
