// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

// Operations on feature maps. A feature map is (H, W, C) or a batch
// (N, H, W, C), channels fastest. Kernels are stored (k, k, Cin, Cout).

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "hylog/kernels.hpp"
#include "hylog/tensor.hpp"

namespace hylog {

struct MapDims {
  std::size_t n, h, w, c;
  bool batched;

  Shape shape_with(std::size_t hh, std::size_t ww, std::size_t cc) const {
    return batched ? Shape{n, hh, ww, cc} : Shape{hh, ww, cc};
  }
};

inline MapDims map_dims(const Shape& s, const char* op) {
  if (s.size() == 3) return {1, s[0], s[1], s[2], false};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
  throw ShapeError(std::string(op) + " expects a (H,W,C) or (N,H,W,C) map, got " + to_string(s));
}

namespace detail {

struct ConvGeometry {
  std::size_t n, in_h, in_w, in_c;  // conv input
  std::size_t out_h, out_w;         // conv output
  std::size_t k, stride, pad;

  std::size_t rows() const { return n * out_h * out_w; }
  std::size_t cols() const { return k * k * in_c; }
};

// col[(n,oy,ox), (ky,kx,ci)] = x[n, oy*s-p+ky, ox*s-p+kx, ci], zero outside.
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const std::size_t cols = g.cols();
  for (std::size_t b = 0; b < g.n; ++b)
    for (std::size_t oy = 0; oy < g.out_h; ++oy)
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        T* dst = col + ((b * g.out_h + oy) * g.out_w + ox) * cols;
        for (std::size_t ky = 0; ky < g.k; ++ky) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          for (std::size_t kx = 0; kx < g.k; ++kx, dst += g.in_c) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.in_h) || ix >= static_cast<long>(g.in_w)) {
              std::fill(dst, dst + g.in_c, T(0));
            } else {
              const T* src = x + ((b * g.in_h + static_cast<std::size_t>(iy)) * g.in_w + static_cast<std::size_t>(ix)) * g.in_c;
              std::copy(src, src + g.in_c, dst);
            }
          }
        }
      }
}

// Adjoint of im2col: accumulates columns back into x.
template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* x) {
  const std::size_t cols = g.cols();
  for (std::size_t b = 0; b < g.n; ++b)
    for (std::size_t oy = 0; oy < g.out_h; ++oy)
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const T* src = col + ((b * g.out_h + oy) * g.out_w + ox) * cols;
        for (std::size_t ky = 0; ky < g.k; ++ky) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          for (std::size_t kx = 0; kx < g.k; ++kx, src += g.in_c) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.in_h) || ix >= static_cast<long>(g.in_w)) continue;
            T* dst = x + ((b * g.in_h + static_cast<std::size_t>(iy)) * g.in_w + static_cast<std::size_t>(ix)) * g.in_c;
            for (std::size_t c = 0; c < g.in_c; ++c) dst[c] += src[c];
          }
        }
      }
}

inline void check_kernel(const Shape& w, const char* op) {
  if (w.size() != 4 || w[0] != w[1]) throw ShapeError(std::string(op) + " expects a (k,k,Cin,Cout) kernel, got " + to_string(w));
}

template <typename T>
void check_bias(const Tensor<T>& b, std::size_t channels, const char* op) {
  if (b.defined() && (b.rank() != 1 || b.dim(0) != channels)) {
    throw ShapeError(std::string(op) + " bias shape " + to_string(b.shape()) + " does not match " +
                     std::to_string(channels) + " output channels");
  }
}

}  // namespace detail

// Zero-padded 2-D convolution (cross-correlation). `b` may be undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride, std::size_t pad) {
  const MapDims d = map_dims(x.shape(), "conv2d");
  detail::check_kernel(w.shape(), "conv2d");
  const std::size_t k = w.dim(0), cout = w.dim(3);
  if (w.dim(2) != d.c) {
    throw ShapeError("conv2d input " + to_string(x.shape()) + " does not match kernel " + to_string(w.shape()));
  }
  if (stride == 0) throw ShapeError("conv2d stride must be positive");
  if (d.h + 2 * pad < k || d.w + 2 * pad < k) {
    throw ShapeError("conv2d kernel " + std::to_string(k) + " larger than padded input " + to_string(x.shape()));
  }
  detail::check_bias(b, cout, "conv2d");
  detail::ConvGeometry g{d.n, d.h, d.w, d.c, (d.h + 2 * pad - k) / stride + 1, (d.w + 2 * pad - k) / stride + 1,
                         k, stride, pad};
  auto col = std::make_shared<std::vector<T>>(g.rows() * g.cols());
  detail::im2col(g, x.raw(), col->data());
  std::vector<T> out(g.rows() * cout, T(0));
  if (b.defined()) {
    for (std::size_t r = 0; r < g.rows(); ++r) std::copy(b.raw(), b.raw() + cout, out.begin() + r * cout);
  }
  kernels::gemm_nn(g.rows(), cout, g.cols(), col->data(), w.raw(), out.data(), true);
  const bool keep_col = grad_enabled() && w.requires_grad();
  if (!keep_col) col.reset();
  auto backward = [w, g, cout, col](Node<T>& self) {
    const T* gy = self.grad.data();
    if (T* gw = self.parent_grad(1)) kernels::gemm_tn(g.cols(), cout, g.rows(), col->data(), gy, gw, true);
    if (self.parents.size() > 2) {
      if (T* gb = self.parent_grad(2)) {
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t j = 0; j < cout; ++j) gb[j] += gy[r * cout + j];
      }
    }
    if (T* gx = self.parent_grad(0)) {
      std::vector<T> gcol(g.rows() * g.cols());
      kernels::gemm_nt(g.rows(), g.cols(), cout, gy, w.raw(), gcol.data(), false);
      detail::col2im(g, gcol.data(), gx);
    }
  };
  Shape out_shape = d.shape_with(g.out_h, g.out_w, cout);
  if (b.defined()) return make_result("conv2d", out_shape, std::move(out), {&x, &w, &b}, backward);
  return make_result("conv2d", out_shape, std::move(out), {&x, &w}, backward);
}

// Transposed convolution, the adjoint of conv2d with the same kernel: a
// kernel (k,k,Cout,Cin) maps Cin input channels to Cout output channels.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride,
                           std::size_t pad) {
  const MapDims d = map_dims(x.shape(), "conv_transpose2d");
  detail::check_kernel(w.shape(), "conv_transpose2d");
  const std::size_t k = w.dim(0), cout = w.dim(2);
  if (w.dim(3) != d.c) {
    throw ShapeError("conv_transpose2d input " + to_string(x.shape()) + " does not match kernel " + to_string(w.shape()));
  }
  if (stride == 0) throw ShapeError("conv_transpose2d stride must be positive");
  const long oh = static_cast<long>((d.h - 1) * stride + k) - 2 * static_cast<long>(pad);
  const long ow = static_cast<long>((d.w - 1) * stride + k) - 2 * static_cast<long>(pad);
  if (oh <= 0 || ow <= 0) throw ShapeError("conv_transpose2d geometry yields an empty output for " + to_string(x.shape()));
  detail::check_bias(b, cout, "conv_transpose2d");
  // Geometry of the forward convolution whose adjoint this is.
  detail::ConvGeometry g{d.n, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), cout, d.h, d.w, k, stride, pad};
  std::vector<T> gcol(g.rows() * g.cols());
  kernels::gemm_nt(g.rows(), g.cols(), d.c, x.raw(), w.raw(), gcol.data(), false);
  std::vector<T> out(d.n * g.in_h * g.in_w * cout, T(0));
  detail::col2im(g, gcol.data(), out.data());
  if (b.defined()) {
    for (std::size_t p = 0; p < out.size() / cout; ++p)
      for (std::size_t c = 0; c < cout; ++c) out[p * cout + c] += b[c];
  }
  const std::size_t cin = d.c;
  auto backward = [x, w, g, cin, cout](Node<T>& self) {
    const T* gy = self.grad.data();
    std::vector<T> col(g.rows() * g.cols());
    detail::im2col(g, gy, col.data());
    if (T* gx = self.parent_grad(0)) kernels::gemm_nn(g.rows(), cin, g.cols(), col.data(), w.raw(), gx, true);
    if (T* gw = self.parent_grad(1)) kernels::gemm_tn(g.cols(), cin, g.rows(), col.data(), x.raw(), gw, true);
    if (self.parents.size() > 2) {
      if (T* gb = self.parent_grad(2)) {
        const std::size_t pixels = self.grad.size() / cout;
        for (std::size_t p = 0; p < pixels; ++p)
          for (std::size_t c = 0; c < cout; ++c) gb[c] += gy[p * cout + c];
      }
    }
  };
  Shape out_shape = d.shape_with(g.in_h, g.in_w, cout);
  if (b.defined()) return make_result("conv_transpose2d", out_shape, std::move(out), {&x, &w, &b}, backward);
  return make_result("conv_transpose2d", out_shape, std::move(out), {&x, &w}, backward);
}

// Mean over non-overlapping factor x factor cells.
template <typename T>
Tensor<T> avgpool2d(const Tensor<T>& x, std::size_t factor) {
  const MapDims d = map_dims(x.shape(), "avgpool2d");
  if (factor == 0 || d.h % factor != 0 || d.w % factor != 0) {
    throw ShapeError("avgpool2d factor " + std::to_string(factor) + " does not divide " + to_string(x.shape()));
  }
  const std::size_t oh = d.h / factor, ow = d.w / factor;
  const T inv = T(1) / static_cast<T>(factor * factor);
  std::vector<T> out(d.n * oh * ow * d.c, T(0));
  const T* px = x.raw();
  for (std::size_t b = 0; b < d.n; ++b)
    for (std::size_t y = 0; y < d.h; ++y)
      for (std::size_t xx = 0; xx < d.w; ++xx) {
        const T* src = px + ((b * d.h + y) * d.w + xx) * d.c;
        T* dst = out.data() + ((b * oh + y / factor) * ow + xx / factor) * d.c;
        for (std::size_t c = 0; c < d.c; ++c) dst[c] += src[c];
      }
  for (auto& v : out) v *= inv;
  return make_result("avgpool2d", d.shape_with(oh, ow, d.c), std::move(out), {&x},
                     [d, factor, oh, ow, inv](Node<T>& self) {
                       T* gx = self.parent_grad(0);
                       if (!gx) return;
                       for (std::size_t b = 0; b < d.n; ++b)
                         for (std::size_t y = 0; y < d.h; ++y)
                           for (std::size_t xx = 0; xx < d.w; ++xx) {
                             T* dst = gx + ((b * d.h + y) * d.w + xx) * d.c;
                             const T* g = self.grad.data() + ((b * oh + y / factor) * ow + xx / factor) * d.c;
                             for (std::size_t c = 0; c < d.c; ++c) dst[c] += g[c] * inv;
                           }
                     });
}

// Channelwise spatial mean: -> (1,1,C) or (N,1,1,C).
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const MapDims d = map_dims(x.shape(), "global_avg_pool");
  const std::size_t pixels = d.h * d.w;
  const T inv = T(1) / static_cast<T>(pixels);
  std::vector<T> out(d.n * d.c, T(0));
  const T* px = x.raw();
  for (std::size_t b = 0; b < d.n; ++b)
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t c = 0; c < d.c; ++c) out[b * d.c + c] += px[(b * pixels + p) * d.c + c];
  for (auto& v : out) v *= inv;
  return make_result("global_avg_pool", d.shape_with(1, 1, d.c), std::move(out), {&x},
                     [d, pixels, inv](Node<T>& self) {
                       T* gx = self.parent_grad(0);
                       if (!gx) return;
                       for (std::size_t b = 0; b < d.n; ++b)
                         for (std::size_t p = 0; p < pixels; ++p)
                           for (std::size_t c = 0; c < d.c; ++c)
                             gx[(b * pixels + p) * d.c + c] += self.grad[b * d.c + c] * inv;
                     });
}

// Channelwise spatial max; the gradient goes to the first maximal position.
template <typename T>
Tensor<T> global_max_pool(const Tensor<T>& x) {
  const MapDims d = map_dims(x.shape(), "global_max_pool");
  const std::size_t pixels = d.h * d.w;
  std::vector<T> out(d.n * d.c, -std::numeric_limits<T>::infinity());
  std::vector<std::size_t> arg(d.n * d.c, 0);
  const T* px = x.raw();
  for (std::size_t b = 0; b < d.n; ++b)
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t c = 0; c < d.c; ++c) {
        const std::size_t i = (b * pixels + p) * d.c + c;
        if (px[i] > out[b * d.c + c]) {
          out[b * d.c + c] = px[i];
          arg[b * d.c + c] = i;
        }
      }
  return make_result("global_max_pool", d.shape_with(1, 1, d.c), std::move(out), {&x}, [arg](Node<T>& self) {
    T* gx = self.parent_grad(0);
    if (!gx) return;
    for (std::size_t i = 0; i < arg.size(); ++i) gx[arg[i]] += self.grad[i];
  });
}

namespace detail {

struct LerpTap {
  std::size_t i0, i1;
  double frac;
};

// Half-pixel source coordinates: src = (o + 0.5) / factor - 0.5, clamped.
inline std::vector<LerpTap> bilinear_taps(std::size_t in, std::size_t factor) {
  std::vector<LerpTap> taps(in * factor);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    if (src < 0) src = 0;
    const auto i0 = std::min(static_cast<std::size_t>(src), in - 1);
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace detail

// Bilinear upsampling by an integer factor (half-pixel centers).
template <typename T>
Tensor<T> upsample2d(const Tensor<T>& x, std::size_t factor) {
  const MapDims d = map_dims(x.shape(), "upsample2d");
  if (factor == 0) throw ShapeError("upsample2d factor must be >= 1");
  const std::size_t oh = d.h * factor, ow = d.w * factor;
  auto ty = detail::bilinear_taps(d.h, factor);
  auto tx = detail::bilinear_taps(d.w, factor);
  std::vector<T> out(d.n * oh * ow * d.c);
  const T* px = x.raw();
  for (std::size_t b = 0; b < d.n; ++b)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const T fy = static_cast<T>(ty[y].frac), fx = static_cast<T>(tx[xx].frac);
        const T* r0 = px + (b * d.h + ty[y].i0) * d.w * d.c;
        const T* r1 = px + (b * d.h + ty[y].i1) * d.w * d.c;
        T* dst = out.data() + ((b * oh + y) * ow + xx) * d.c;
        for (std::size_t c = 0; c < d.c; ++c) {
          const T top = r0[tx[xx].i0 * d.c + c] * (T(1) - fx) + r0[tx[xx].i1 * d.c + c] * fx;
          const T bot = r1[tx[xx].i0 * d.c + c] * (T(1) - fx) + r1[tx[xx].i1 * d.c + c] * fx;
          dst[c] = top * (T(1) - fy) + bot * fy;
        }
      }
  return make_result("upsample2d", d.shape_with(oh, ow, d.c), std::move(out), {&x},
                     [d, oh, ow, ty, tx](Node<T>& self) {
                       T* gx = self.parent_grad(0);
                       if (!gx) return;
                       for (std::size_t b = 0; b < d.n; ++b)
                         for (std::size_t y = 0; y < oh; ++y)
                           for (std::size_t xx = 0; xx < ow; ++xx) {
                             const T fy = static_cast<T>(ty[y].frac), fx = static_cast<T>(tx[xx].frac);
                             T* r0 = gx + (b * d.h + ty[y].i0) * d.w * d.c;
                             T* r1 = gx + (b * d.h + ty[y].i1) * d.w * d.c;
                             const T* g = self.grad.data() + ((b * oh + y) * ow + xx) * d.c;
                             for (std::size_t c = 0; c < d.c; ++c) {
                               const T top = g[c] * (T(1) - fy), bot = g[c] * fy;
                               r0[tx[xx].i0 * d.c + c] += top * (T(1) - fx);
                               r0[tx[xx].i1 * d.c + c] += top * fx;
                               r1[tx[xx].i0 * d.c + c] += bot * (T(1) - fx);
                               r1[tx[xx].i1 * d.c + c] += bot * fx;
                             }
                           }
                     });
}

// Valid 1-D correlation with a fixed kernel along `axis` (not learned).
template <typename T>
Tensor<T> correlate1d_valid(const Tensor<T>& x, std::size_t axis, std::vector<T> taps) {
  const Shape& s = x.shape();
  const std::size_t k = taps.size();
  if (axis >= s.size() || s[axis] < k) {
    throw ShapeError("correlate1d_valid: extent smaller than kernel for " + to_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis], olen = len - k + 1;
  Shape out_shape = s;
  out_shape[axis] = olen;
  std::vector<T> out(outer * olen * inner, T(0));
  const T* px = x.raw();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t a = 0; a < olen; ++a) {
      T* dst = out.data() + (o * olen + a) * inner;
      for (std::size_t t = 0; t < k; ++t) kernels::axpy(taps[t], px + (o * len + a + t) * inner, dst, inner);
    }
  return make_result("correlate1d_valid", out_shape, std::move(out), {&x},
                     [taps, outer, len, olen, inner](Node<T>& self) {
                       T* gx = self.parent_grad(0);
                       if (!gx) return;
                       for (std::size_t o = 0; o < outer; ++o)
                         for (std::size_t a = 0; a < olen; ++a) {
                           const T* g = self.grad.data() + (o * olen + a) * inner;
                           for (std::size_t t = 0; t < taps.size(); ++t)
                             kernels::axpy(taps[t], g, gx + (o * len + a + t) * inner, inner);
                         }
                     });
}

}  // namespace hylog
