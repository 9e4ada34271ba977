// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

// Elementwise arithmetic with broadcasting, pointwise activations,
// reductions and layout operations (reshape, gather, concat, finite
// differences).

#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "hylog/tensor.hpp"

namespace hylog {

namespace detail {

// Right-aligned broadcast of two shapes; throws naming both on mismatch.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("shapes " + to_string(a) + " and " + to_string(b) +
                       " are not broadcast-compatible");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `in` viewed in the broadcast `out` shape; broadcast axes get 0.
inline std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    const std::size_t oi = i + (out.size() - in.size());
    strides[oi] = in[i] == 1 ? 0 : stride;
    stride *= in[i];
  }
  return strides;
}

// Calls f(out_index, a_index, b_index) over the broadcast shape.
template <typename F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t rank = out.size();
  const std::size_t n = numel_of(out);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < n; ++o) {
    f(o, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

enum class BinaryKind { add, sub, mul, div };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinaryKind kind) {
  static constexpr const char* names[] = {"add", "sub", "mul", "div"};
  const char* name = names[static_cast<int>(kind)];
  auto apply = [kind](T x, T y) {
    switch (kind) {
      case BinaryKind::add: return x + y;
      case BinaryKind::sub: return x - y;
      case BinaryKind::mul: return x * y;
      case BinaryKind::div: return x / y;
    }
    return T(0);
  };

  if (a.shape() == b.shape()) {
    const std::size_t n = a.numel();
    std::vector<T> out(n);
    const T* pa = a.raw();
    const T* pb = b.raw();
    for (std::size_t i = 0; i < n; ++i) out[i] = apply(pa[i], pb[i]);
    return make_result(name, a.shape(), std::move(out), {&a, &b},
                       [kind, a, b](Node<T>& self) {
                         const T* g = self.grad.data();
                         const std::size_t n = self.grad.size();
                         const T* pa = a.raw();
                         const T* pb = b.raw();
                         if (T* ga = self.parent_grad(0)) {
                           for (std::size_t i = 0; i < n; ++i) {
                             switch (kind) {
                               case BinaryKind::add:
                               case BinaryKind::sub: ga[i] += g[i]; break;
                               case BinaryKind::mul: ga[i] += g[i] * pb[i]; break;
                               case BinaryKind::div: ga[i] += g[i] / pb[i]; break;
                             }
                           }
                         }
                         if (T* gb = self.parent_grad(1)) {
                           for (std::size_t i = 0; i < n; ++i) {
                             switch (kind) {
                               case BinaryKind::add: gb[i] += g[i]; break;
                               case BinaryKind::sub: gb[i] -= g[i]; break;
                               case BinaryKind::mul: gb[i] += g[i] * pa[i]; break;
                               case BinaryKind::div: gb[i] -= g[i] * pa[i] / (pb[i] * pb[i]); break;
                             }
                           }
                         }
                       });
  }

  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  auto sa = broadcast_strides(a.shape(), out_shape);
  auto sb = broadcast_strides(b.shape(), out_shape);
  std::vector<T> out(numel_of(out_shape));
  const T* pa = a.raw();
  const T* pb = b.raw();
  for_each_broadcast(out_shape, sa, sb,
                     [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = apply(pa[ia], pb[ib]); });
  return make_result(name, out_shape, std::move(out), {&a, &b},
                     [kind, a, b, out_shape, sa, sb](Node<T>& self) {
                       const T* g = self.grad.data();
                       const T* pa = a.raw();
                       const T* pb = b.raw();
                       T* ga = self.parent_grad(0);
                       T* gb = self.parent_grad(1);
                       for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                         switch (kind) {
                           case BinaryKind::add:
                             if (ga) ga[ia] += g[o];
                             if (gb) gb[ib] += g[o];
                             break;
                           case BinaryKind::sub:
                             if (ga) ga[ia] += g[o];
                             if (gb) gb[ib] -= g[o];
                             break;
                           case BinaryKind::mul:
                             if (ga) ga[ia] += g[o] * pb[ib];
                             if (gb) gb[ib] += g[o] * pa[ia];
                             break;
                           case BinaryKind::div:
                             if (ga) ga[ia] += g[o] / pb[ib];
                             if (gb) gb[ib] -= g[o] * pa[ia] / (pb[ib] * pb[ib]);
                             break;
                         }
                       });
                     });
}

// Pointwise map with derivative expressed through input x and output y.
template <typename T, typename F, typename DF>
Tensor<T> unary(const char* name, const Tensor<T>& x, F&& f, DF&& df) {
  const std::size_t n = x.numel();
  std::vector<T> out(n);
  const T* px = x.raw();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(px[i]);
  return make_result(name, x.shape(), std::move(out), {&x}, [x, df](Node<T>& self) {
    T* gx = self.parent_grad(0);
    if (!gx) return;
    const T* px = x.raw();
    const T* py = self.data->data();
    const T* g = self.grad.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += g[i] * df(px[i], py[i]);
  });
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, detail::BinaryKind::add);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, detail::BinaryKind::sub);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, detail::BinaryKind::mul);
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, detail::BinaryKind::div);
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return detail::unary("scale", x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return detail::unary("add_scalar", x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary("square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      "sigmoid", x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

// Exact (erf-based) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
  return detail::unary(
      "gelu", x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [](T v, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        return cdf + v * inv_sqrt2pi * std::exp(T(-0.5) * v * v);
      });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (const T v : x.data()) acc += v;
  return make_result("sum", Shape{1}, std::vector<T>{acc}, {&x}, [](Node<T>& self) {
    T* gx = self.parent_grad(0);
    if (!gx) return;
    const T g = self.grad[0];
    const std::size_t n = self.parents[0]->data->size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const T inv = T(1) / static_cast<T>(x.numel());
  T acc = T(0);
  for (const T v : x.data()) acc += v;
  return make_result("mean", Shape{1}, std::vector<T>{acc * inv}, {&x}, [inv](Node<T>& self) {
    T* gx = self.parent_grad(0);
    if (!gx) return;
    const T g = self.grad[0] * inv;
    const std::size_t n = self.parents[0]->data->size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
}

// Euclidean norm of each leading-axis slice: (N, ...) -> (N). The
// subgradient at a zero slice is taken as zero.
template <typename T>
Tensor<T> norm_per_sample(const Tensor<T>& x) {
  const std::size_t n = x.dim(0);
  const std::size_t per = x.numel() / n;
  std::vector<T> out(n);
  const T* px = x.raw();
  for (std::size_t s = 0; s < n; ++s) {
    T acc = T(0);
    for (std::size_t i = 0; i < per; ++i) acc += px[s * per + i] * px[s * per + i];
    out[s] = std::sqrt(acc);
  }
  auto norms = out;
  return make_result("norm_per_sample", Shape{n}, std::move(out), {&x},
                     [x, n, per, norms](Node<T>& self) {
                       T* gx = self.parent_grad(0);
                       if (!gx) return;
                       const T* px = x.raw();
                       for (std::size_t s = 0; s < n; ++s) {
                         if (norms[s] == T(0)) continue;
                         const T k = self.grad[s] / norms[s];
                         for (std::size_t i = 0; i < per; ++i) gx[s * per + i] += k * px[s * per + i];
                       }
                     });
}

// Same values viewed under a new shape; storage is shared.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    throw ShapeError("cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = x.node()->data;
  node->op = "reshape";
  if (grad_enabled() && x.requires_grad()) {
    node->requires_grad = true;
    node->parents.push_back(x.node());
    node->backward = [](Node<T>& self) {
      T* gx = self.parent_grad(0);
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    };
  }
  return Tensor<T>::from_node(std::move(node));
}

// out[i] = x[index[i]]. Backward scatters (adds) into the gathered positions.
template <typename T>
Tensor<T> gather(const Tensor<T>& x, Shape shape, std::shared_ptr<const std::vector<std::size_t>> index) {
  if (numel_of(shape) != index->size()) throw ShapeError("gather index length does not match shape");
  std::vector<T> out(index->size());
  const T* px = x.raw();
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if ((*index)[i] >= n) throw ShapeError("gather index out of range");
    out[i] = px[(*index)[i]];
  }
  return make_result("gather", std::move(shape), std::move(out), {&x}, [index](Node<T>& self) {
    T* gx = self.parent_grad(0);
    if (!gx) return;
    const auto& idx = *index;
    for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += self.grad[i];
  });
}

// Axis permutation: out axis i is input axis perm[i].
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const Shape& in = x.shape();
  if (perm.size() != in.size()) throw ShapeError("permute rank mismatch for " + to_string(in));
  std::vector<std::size_t> in_strides(in.size(), 1);
  for (std::size_t i = in.size(); i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  Shape out(in.size());
  std::vector<std::size_t> strides(in.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out[i] = in.at(perm[i]);
    strides[i] = in_strides[perm[i]];
  }
  auto index = std::make_shared<std::vector<std::size_t>>(x.numel());
  std::vector<std::size_t> zero(in.size(), 0);
  detail::for_each_broadcast(out, strides, zero,
                             [&](std::size_t o, std::size_t src, std::size_t) { (*index)[o] = src; });
  return gather(x, out, std::move(index));
}

// Concatenation along `axis`; all other extents must agree.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat of an empty list");
  const Shape& first = xs[0].shape();
  if (axis >= first.size()) throw ShapeError("concat axis out of range for " + to_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) throw ShapeError("concat shape mismatch: " + to_string(first) + " vs " + to_string(s));
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_row = out_shape[axis] * inner;
  std::vector<T> out(numel_of(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& x : xs) {
    offsets.push_back(offset);
    const std::size_t row = x.dim(axis) * inner;
    const T* px = x.raw();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy(px + o * row, px + (o + 1) * row, out.begin() + o * out_row + offset);
    offset += row;
  }
  return make_result_n("concat", out_shape, std::move(out), xs,
                       [outer, out_row, offsets](Node<T>& self) {
                         for (std::size_t k = 0; k < self.parents.size(); ++k) {
                           T* gx = self.parent_grad(k);
                           if (!gx) continue;
                           const std::size_t row = self.parents[k]->data->size() / outer;
                           for (std::size_t o = 0; o < outer; ++o) {
                             const T* g = self.grad.data() + o * out_row + offsets[k];
                             for (std::size_t i = 0; i < row; ++i) gx[o * row + i] += g[i];
                           }
                         }
                       });
}

namespace detail {

// Forward difference along `axis`, trailing slice zero.
template <typename T>
Tensor<T> forward_diff(const Tensor<T>& x, std::size_t axis, const char* name) {
  const Shape& s = x.shape();
  const std::size_t len = s[axis];
  if (len < 2) throw ShapeError(std::string(name) + " needs extent >= 2, got " + to_string(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  std::vector<T> out(x.numel(), T(0));
  const T* px = x.raw();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t a = 0; a + 1 < len; ++a)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t p = (o * len + a) * inner + i;
        out[p] = px[p + inner] - px[p];
      }
  return make_result(name, s, std::move(out), {&x}, [outer, len, inner](Node<T>& self) {
    T* gx = self.parent_grad(0);
    if (!gx) return;
    const T* g = self.grad.data();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t a = 0; a + 1 < len; ++a)
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t p = (o * len + a) * inner + i;
          gx[p + inner] += g[p];
          gx[p] -= g[p];
        }
  });
}

}  // namespace detail

// Horizontal forward difference of an (H,W,C) or (N,H,W,C) map.
template <typename T>
Tensor<T> spatial_diff_x(const Tensor<T>& x) {
  if (x.rank() < 3) throw ShapeError("spatial_diff_x expects a feature map, got " + to_string(x.shape()));
  return detail::forward_diff(x, x.rank() - 2, "spatial_diff_x");
}

// Vertical forward difference of an (H,W,C) or (N,H,W,C) map.
template <typename T>
Tensor<T> spatial_diff_y(const Tensor<T>& x) {
  if (x.rank() < 3) throw ShapeError("spatial_diff_y expects a feature map, got " + to_string(x.shape()));
  return detail::forward_diff(x, x.rank() - 3, "spatial_diff_y");
}

}  // namespace hylog
