// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hylog/tensor.hpp"

namespace hylog {

inline constexpr double kLayerNormEps = 1e-5;

namespace detail {

struct AxisSplit {
  std::size_t outer, len, inner;
  std::size_t at(std::size_t o, std::size_t a, std::size_t i) const { return (o * len + a) * inner + i; }
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) throw ShapeError(std::string(op) + " axis out of range for " + to_string(s));
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace detail

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const auto sp = detail::split_axis(x.shape(), axis, "softmax");
  std::vector<T> out(x.numel());
  const T* px = x.raw();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      T mx = px[sp.at(o, 0, i)];
      for (std::size_t a = 1; a < sp.len; ++a) mx = std::max(mx, px[sp.at(o, a, i)]);
      T total = T(0);
      for (std::size_t a = 0; a < sp.len; ++a) {
        const T e = std::exp(px[sp.at(o, a, i)] - mx);
        out[sp.at(o, a, i)] = e;
        total += e;
      }
      for (std::size_t a = 0; a < sp.len; ++a) out[sp.at(o, a, i)] /= total;
    }
  return make_result("softmax", x.shape(), std::move(out), {&x}, [sp](Node<T>& self) {
    T* gx = self.parent_grad(0);
    if (!gx) return;
    const T* y = self.data->data();
    const T* g = self.grad.data();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        T dot = T(0);
        for (std::size_t a = 0; a < sp.len; ++a) dot += g[sp.at(o, a, i)] * y[sp.at(o, a, i)];
        for (std::size_t a = 0; a < sp.len; ++a) {
          const std::size_t p = sp.at(o, a, i);
          gx[p] += y[p] * (g[p] - dot);
        }
      }
  });
}

// Normalizes over `axis` (epsilon 1e-5 in the variance denominator), then
// applies per-position gain and bias of length shape[axis].
template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, std::size_t axis) {
  const auto sp = detail::split_axis(x.shape(), axis, "layernorm");
  if (gamma.numel() != sp.len || beta.numel() != sp.len) {
    throw ShapeError("layernorm gain/bias length must be " + std::to_string(sp.len) + ", got " +
                     to_string(gamma.shape()) + " and " + to_string(beta.shape()));
  }
  const std::size_t groups = sp.outer * sp.inner;
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto inv_std = std::make_shared<std::vector<T>>(groups);
  std::vector<T> out(x.numel());
  const T* px = x.raw();
  const T* pg = gamma.raw();
  const T* pb = beta.raw();
  const T inv_len = T(1) / static_cast<T>(sp.len);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      T mu = T(0);
      for (std::size_t a = 0; a < sp.len; ++a) mu += px[sp.at(o, a, i)];
      mu *= inv_len;
      T var = T(0);
      for (std::size_t a = 0; a < sp.len; ++a) {
        const T dlt = px[sp.at(o, a, i)] - mu;
        var += dlt * dlt;
      }
      var *= inv_len;
      const T is = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
      (*inv_std)[o * sp.inner + i] = is;
      for (std::size_t a = 0; a < sp.len; ++a) {
        const std::size_t p = sp.at(o, a, i);
        (*xhat)[p] = (px[p] - mu) * is;
        out[p] = (*xhat)[p] * pg[a] + pb[a];
      }
    }
  return make_result("layernorm", x.shape(), std::move(out), {&x, &gamma, &beta},
                     [sp, xhat, inv_std, gamma, inv_len](Node<T>& self) {
                       const T* g = self.grad.data();
                       const T* pg = gamma.raw();
                       const T* xh = xhat->data();
                       if (T* gg = self.parent_grad(1)) {
                         for (std::size_t o = 0; o < sp.outer; ++o)
                           for (std::size_t a = 0; a < sp.len; ++a)
                             for (std::size_t i = 0; i < sp.inner; ++i) gg[a] += g[sp.at(o, a, i)] * xh[sp.at(o, a, i)];
                       }
                       if (T* gb = self.parent_grad(2)) {
                         for (std::size_t o = 0; o < sp.outer; ++o)
                           for (std::size_t a = 0; a < sp.len; ++a)
                             for (std::size_t i = 0; i < sp.inner; ++i) gb[a] += g[sp.at(o, a, i)];
                       }
                       T* gx = self.parent_grad(0);
                       if (!gx) return;
                       for (std::size_t o = 0; o < sp.outer; ++o)
                         for (std::size_t i = 0; i < sp.inner; ++i) {
                           T m1 = T(0), m2 = T(0);
                           for (std::size_t a = 0; a < sp.len; ++a) {
                             const std::size_t p = sp.at(o, a, i);
                             const T dxh = g[p] * pg[a];
                             m1 += dxh;
                             m2 += dxh * xh[p];
                           }
                           m1 *= inv_len;
                           m2 *= inv_len;
                           const T is = (*inv_std)[o * sp.inner + i];
                           for (std::size_t a = 0; a < sp.len; ++a) {
                             const std::size_t p = sp.at(o, a, i);
                             gx[p] += is * (g[p] * pg[a] - m1 - xh[p] * m2);
                           }
                         }
                     });
}

}  // namespace hylog
