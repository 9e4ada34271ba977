// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

// Training objectives and image-quality metrics.

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "hylog/network.hpp"

namespace hylog {

struct LossWeights {
  double reflectance = 1.0;
  double shading = 1.0;
  double dehaze = 1.5;
};

namespace detail {
inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}
}  // namespace detail

// Mean squared error over all elements.
template <typename T>
Tensor<T> l2_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::require_same_shape(pred.shape(), target.shape(), "l2_loss");
  return mean(square(sub(pred, target)));
}

// Normalized 11-tap Gaussian with sigma 1.5.
template <typename T>
std::vector<T> ssim_window() {
  std::vector<double> w(11);
  double total = 0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5;
    w[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
    total += w[i];
  }
  std::vector<T> out(11);
  for (int i = 0; i < 11; ++i) out[i] = static_cast<T>(w[i] / total);
  return out;
}

// Per-pixel SSIM map over valid 11x11 Gaussian windows, per channel.
template <typename T>
Tensor<T> ssim_map(const Tensor<T>& x, const Tensor<T>& y) {
  detail::require_same_shape(x.shape(), y.shape(), "ssim");
  const MapDims d = map_dims(x.shape(), "ssim");
  if (d.h < 11 || d.w < 11) throw ShapeError("ssim needs images of at least 11x11, got " + to_string(x.shape()));
  const auto taps = ssim_window<T>();
  const std::size_t ay = x.rank() - 3, ax = x.rank() - 2;
  auto blur = [&](const Tensor<T>& t) { return correlate1d_valid(correlate1d_valid(t, ax, taps), ay, taps); };
  constexpr T c1 = T(0.01 * 0.01), c2 = T(0.03 * 0.03);
  auto mu_x = blur(x), mu_y = blur(y);
  auto mu_xx = square(mu_x), mu_yy = square(mu_y), mu_xy = mul(mu_x, mu_y);
  auto sxx = sub(blur(square(x)), mu_xx);
  auto syy = sub(blur(square(y)), mu_yy);
  auto sxy = sub(blur(mul(x, y)), mu_xy);
  auto num = mul(add_scalar(scale(mu_xy, T(2)), c1), add_scalar(scale(sxy, T(2)), c2));
  auto den = mul(add_scalar(add(mu_xx, mu_yy), c1), add_scalar(add(sxx, syy), c2));
  return div(num, den);
}

template <typename T>
Tensor<T> ssim(const Tensor<T>& x, const Tensor<T>& y) {
  return mean(ssim_map(x, y));
}

template <typename T>
Tensor<T> ssim_loss(const Tensor<T>& x, const Tensor<T>& y) {
  return add_scalar(scale(ssim(x, y), T(-1)), T(1));
}

// Batch mean of ||dx(S) - dx(S_gt)||_2 + ||dy(S) - dy(S_gt)||_2, norms taken
// over each sample's whole derivative map.
template <typename T>
Tensor<T> edge_loss(const Tensor<T>& shading, const Tensor<T>& target) {
  detail::require_same_shape(shading.shape(), target.shape(), "edge_loss");
  auto batched = [](const Tensor<T>& t) {
    return t.rank() == 4 ? t : reshape(t, Shape{1, t.dim(0), t.dim(1), t.dim(2)});
  };
  const auto s = batched(shading), g = batched(target);
  auto dx = sub(spatial_diff_x(s), spatial_diff_x(g));
  auto dy = sub(spatial_diff_y(s), spatial_diff_y(g));
  return mean(add(norm_per_sample(dx), norm_per_sample(dy)));
}

template <typename T>
struct LossTargets {
  Tensor<T> clear, reflectance, shading;
};

template <typename T>
struct LossBreakdown {
  Tensor<T> total;
  // Unweighted task losses; zero for disabled streams.
  double reflectance = 0, shading = 0, dehaze = 0;
};

// Weighted multi-task objective. Reflectance and dehazing use L2 + SSIM
// loss; shading uses L2 + edge loss. Absent outputs contribute nothing.
template <typename T>
LossBreakdown<T> hybrid_loss(const NetworkOutputs<T>& out, const LossTargets<T>& targets, const LossWeights& w) {
  LossBreakdown<T> r;
  auto need = [](const Tensor<T>& t, const char* what) {
    if (!t.defined()) throw std::invalid_argument(std::string("missing ") + what + " target for an enabled stream");
  };
  need(targets.clear, "clear-image");
  auto ld = add(l2_loss(out.dehazed, targets.clear), ssim_loss(out.dehazed, targets.clear));
  r.dehaze = static_cast<double>(ld.item());
  Tensor<T> total = scale(ld, static_cast<T>(w.dehaze));
  if (out.reflectance) {
    need(targets.reflectance, "reflectance");
    auto lr = add(l2_loss(*out.reflectance, targets.reflectance), ssim_loss(*out.reflectance, targets.reflectance));
    r.reflectance = static_cast<double>(lr.item());
    total = add(total, scale(lr, static_cast<T>(w.reflectance)));
  }
  if (out.shading) {
    need(targets.shading, "shading");
    auto ls = add(l2_loss(*out.shading, targets.shading), edge_loss(*out.shading, targets.shading));
    r.shading = static_cast<double>(ls.item());
    total = add(total, scale(ls, static_cast<T>(w.shading)));
  }
  r.total = total;
  return r;
}

// Peak signal-to-noise ratio in dB; +infinity when the inputs are identical.
template <typename T>
double psnr(const Tensor<T>& pred, const Tensor<T>& target, double max_val = 1.0) {
  detail::require_same_shape(pred.shape(), target.shape(), "psnr");
  double acc = 0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(pred.numel());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

}  // namespace hylog
