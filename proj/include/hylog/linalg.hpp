// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

// Matrix products and multi-head scaled dot-product attention.

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "hylog/kernels.hpp"
#include "hylog/parallel.hpp"
#include "hylog/tensor.hpp"

namespace hylog {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul expects matrices, got " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul inner extent mismatch: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  std::vector<T> out(m * n);
  kernels::gemm_nn(m, n, k, a.raw(), b.raw(), out.data(), false);
  return make_result("matmul", Shape{m, n}, std::move(out), {&a, &b}, [a, b, m, n, k](Node<T>& self) {
    if (T* ga = self.parent_grad(0)) kernels::gemm_nt(m, k, n, self.grad.data(), b.raw(), ga, true);
    if (T* gb = self.parent_grad(1)) kernels::gemm_tn(k, n, m, a.raw(), self.grad.data(), gb, true);
  });
}

// Affine map over the last axis: x (..., in) * w (in, out) + b (out).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const std::size_t in = w.dim(0), out_dim = w.dim(1);
  if (x.shape().back() != in) {
    throw ShapeError("linear input width mismatch: " + to_string(x.shape()) + " vs weight " + to_string(w.shape()));
  }
  if (b.defined() && (b.rank() != 1 || b.dim(0) != out_dim)) {
    throw ShapeError("linear bias shape " + to_string(b.shape()) + " does not match weight " + to_string(w.shape()));
  }
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  std::vector<T> out(rows * out_dim);
  if (b.defined()) {
    for (std::size_t r = 0; r < rows; ++r) std::copy(b.raw(), b.raw() + out_dim, out.begin() + r * out_dim);
  }
  kernels::gemm_nn(rows, out_dim, in, x.raw(), w.raw(), out.data(), b.defined());
  auto backward = [x, w, rows, in, out_dim](Node<T>& self) {
    const T* g = self.grad.data();
    if (T* gx = self.parent_grad(0)) kernels::gemm_nt(rows, in, out_dim, g, w.raw(), gx, true);
    if (T* gw = self.parent_grad(1)) kernels::gemm_tn(in, out_dim, rows, x.raw(), g, gw, true);
    if (self.parents.size() > 2) {
      if (T* gb = self.parent_grad(2)) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < out_dim; ++j) gb[j] += g[r * out_dim + j];
      }
    }
  };
  if (b.defined()) return make_result("linear", out_shape, std::move(out), {&x, &w, &b}, backward);
  return make_result("linear", out_shape, std::move(out), {&x, &w}, backward);
}

namespace detail {

// One (batch, head) slice of q/k/v copied into contiguous [L x d] storage.
template <typename T>
void load_head(const T* src, std::size_t b, std::size_t h, std::size_t len, std::size_t dim,
               std::size_t head_dim, T* dst) {
  const T* base = src + b * len * dim + h * head_dim;
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t t = 0; t < head_dim; ++t) dst[i * head_dim + t] = base[i * dim + t];
}

template <typename T>
void store_head_add(T* dst, std::size_t b, std::size_t h, std::size_t len, std::size_t dim,
                    std::size_t head_dim, const T* src) {
  T* base = dst + b * len * dim + h * head_dim;
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t t = 0; t < head_dim; ++t) base[i * dim + t] += src[i * head_dim + t];
}

// Row block [r0, r1) of softmax(Q K^T * scale) into probs (stride len).
template <typename T>
void attention_rows(const T* q, const T* kt, std::size_t len, std::size_t head_dim, T scale,
                    std::size_t r0, std::size_t r1, T* probs) {
  for (std::size_t i = r0; i < r1; ++i) {
    T* row = probs + (i - r0) * len;
    std::fill(row, row + len, T(0));
    for (std::size_t t = 0; t < head_dim; ++t) kernels::axpy(q[i * head_dim + t] * scale, kt + t * len, row, len);
    const T inv = T(1) / kernels::exp_shifted(row, len, kernels::max_of(row, len));
#pragma omp simd
    for (std::size_t j = 0; j < len; ++j) row[j] *= inv;
  }
}

struct AttentionGeometry {
  std::size_t batch, len, dim, heads, head_dim;
};

inline AttentionGeometry attention_geometry(const Shape& q, const Shape& k, const Shape& v, std::size_t heads) {
  if (q.size() != 3 || q != k || q != v) {
    throw ShapeError("attention expects equal (B,L,C) q/k/v, got " + to_string(q) + ", " + to_string(k) + ", " +
                     to_string(v));
  }
  if (heads == 0 || q[2] % heads != 0) {
    throw ShapeError("attention width " + std::to_string(q[2]) + " not divisible by " + std::to_string(heads) +
                     " heads");
  }
  return {q[0], q[1], q[2], heads, q[2] / heads};
}

}  // namespace detail

namespace detail {

// Rows per block so one block of probabilities stays around 256 KiB.
inline std::size_t attention_block_rows(std::size_t len) {
  return std::max<std::size_t>(1, std::min<std::size_t>(len, 65536 / len));
}

// Contiguous per-head copies of q, k^T and v^T for one (batch, head) slice.
template <typename T>
struct HeadSlice {
  std::vector<T> q, kt, vt;

  HeadSlice(const T* qs, const T* ks, const T* vs, std::size_t b, std::size_t h, const AttentionGeometry& g)
      : q(g.len * g.head_dim), kt(g.len * g.head_dim), vt(g.len * g.head_dim) {
    std::vector<T> tmp(g.len * g.head_dim);
    load_head(qs, b, h, g.len, g.dim, g.head_dim, q.data());
    load_head(ks, b, h, g.len, g.dim, g.head_dim, tmp.data());
    kernels::transpose(g.len, g.head_dim, tmp.data(), kt.data());
    load_head(vs, b, h, g.len, g.dim, g.head_dim, tmp.data());
    kernels::transpose(g.len, g.head_dim, tmp.data(), vt.data());
  }
};

}  // namespace detail

// Multi-head scaled dot-product attention on (B, L, C) inputs. Head h uses
// channels [h*C/heads, (h+1)*C/heads). Probabilities are never stored:
// rows are produced in blocks, and the backward pass recomputes them.
template <typename T>
Tensor<T> scaled_dot_product_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                       std::size_t heads) {
  const auto geo = detail::attention_geometry(q.shape(), k.shape(), v.shape(), heads);
  const std::size_t len = geo.len, dim = geo.dim, hd = geo.head_dim;
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  const std::size_t slices = geo.batch * heads;
  const std::size_t block = detail::attention_block_rows(len);

  std::vector<T> out(q.numel(), T(0));
  parallel_for(slices, [&](std::size_t s) {
    const std::size_t b = s / heads, h = s % heads;
    const detail::HeadSlice<T> hs(q.raw(), k.raw(), v.raw(), b, h, geo);
    std::vector<T> p(block * len);
    T* base = out.data() + b * len * dim + h * hd;
    for (std::size_t r0 = 0; r0 < len; r0 += block) {
      const std::size_t r1 = std::min(len, r0 + block);
      detail::attention_rows(hs.q.data(), hs.kt.data(), len, hd, scale, r0, r1, p.data());
      for (std::size_t i = r0; i < r1; ++i) {
        const T* prow = p.data() + (i - r0) * len;
        for (std::size_t t = 0; t < hd; ++t) base[i * dim + t] = kernels::dot(prow, hs.vt.data() + t * len, len);
      }
    }
  });

  return make_result("attention", q.shape(), std::move(out), {&q, &k, &v},
                     [q, k, v, geo, scale, block](Node<T>& self) {
                       const std::size_t len = geo.len, dim = geo.dim, hd = geo.head_dim, heads = geo.heads;
                       T* gq = self.parent_grad(0);
                       T* gk = self.parent_grad(1);
                       T* gv = self.parent_grad(2);
                       const std::size_t slices = geo.batch * heads;
                       std::vector<std::vector<T>> dq(slices), dk(slices), dv(slices);
                       parallel_for(slices, [&](std::size_t s) {
                         const std::size_t b = s / heads, h = s % heads;
                         const detail::HeadSlice<T> hs(q.raw(), k.raw(), v.raw(), b, h, geo);
                         std::vector<T> go(len * hd), dvt(hd * len, T(0)), dkt(hd * len, T(0));
                         std::vector<T>& dqh = dq[s];
                         dqh.assign(len * hd, T(0));
                         detail::load_head(self.grad.data(), b, h, len, dim, hd, go.data());
                         std::vector<T> p(block * len), ds(len);
                         for (std::size_t r0 = 0; r0 < len; r0 += block) {
                           const std::size_t r1 = std::min(len, r0 + block);
                           detail::attention_rows(hs.q.data(), hs.kt.data(), len, hd, scale, r0, r1, p.data());
                           for (std::size_t i = r0; i < r1; ++i) {
                             const T* prow = p.data() + (i - r0) * len;
                             const T* goi = go.data() + i * hd;
                             // dV^T[t, :] += dO[i, t] * P[i, :]
                             for (std::size_t t = 0; t < hd; ++t) kernels::axpy(goi[t], prow, dvt.data() + t * len, len);
                             // dP[i, :] = dO[i, :] V^T; dS = P * (dP - <dP, P>) * scale
                             std::fill(ds.begin(), ds.end(), T(0));
                             for (std::size_t t = 0; t < hd; ++t) kernels::axpy(goi[t], hs.vt.data() + t * len, ds.data(), len);
                             const T rowdot = kernels::dot(ds.data(), prow, len);
                             for (std::size_t j = 0; j < len; ++j) ds[j] = prow[j] * (ds[j] - rowdot) * scale;
                             for (std::size_t t = 0; t < hd; ++t) {
                               dqh[i * hd + t] = kernels::dot(ds.data(), hs.kt.data() + t * len, len);
                               kernels::axpy(hs.q[i * hd + t], ds.data(), dkt.data() + t * len, len);
                             }
                           }
                         }
                         dk[s].resize(len * hd);
                         dv[s].resize(len * hd);
                         kernels::transpose(hd, len, dkt.data(), dk[s].data());
                         kernels::transpose(hd, len, dvt.data(), dv[s].data());
                       });
                       for (std::size_t s = 0; s < slices; ++s) {
                         const std::size_t b = s / heads, h = s % heads;
                         if (gq) detail::store_head_add(gq, b, h, len, dim, hd, dq[s].data());
                         if (gk) detail::store_head_add(gk, b, h, len, dim, hd, dk[s].data());
                         if (gv) detail::store_head_add(gv, b, h, len, dim, hd, dv[s].data());
                       }
                     });
}

// Attention probabilities (B, heads, L, L) for inspection; not differentiable.
template <typename T>
Tensor<T> attention_probabilities(const Tensor<T>& q, const Tensor<T>& k, std::size_t heads) {
  const auto geo = detail::attention_geometry(q.shape(), k.shape(), k.shape(), heads);
  const std::size_t len = geo.len, hd = geo.head_dim;
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  std::vector<T> out(geo.batch * heads * len * len);
  for (std::size_t s = 0; s < geo.batch * heads; ++s) {
    const detail::HeadSlice<T> hs(q.raw(), k.raw(), k.raw(), s / heads, s % heads, geo);
    detail::attention_rows(hs.q.data(), hs.kt.data(), len, hd, scale, 0, len, out.data() + s * len * len);
  }
  return Tensor<T>(Shape{geo.batch, heads, len, len}, std::move(out));
}

}  // namespace hylog
