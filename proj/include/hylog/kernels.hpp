// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

// Row-major dense kernels. All loops have a fixed evaluation order so
// results are bit-reproducible on a given build.

#pragma once

#include <algorithm>
#include <cstring>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <vector>

namespace hylog::kernels {

template <typename T>
inline T dot(const T* __restrict a, const T* __restrict b, std::size_t n) {
  T acc = T(0);
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
inline void axpy(T alpha, const T* __restrict x, T* __restrict y, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
inline T max_of(const T* x, std::size_t n) {
  T mx = x[0];
#pragma omp simd reduction(max : mx)
  for (std::size_t i = 1; i < n; ++i) mx = x[i] > mx ? x[i] : mx;
  return mx;
}

// exp(x) for x <= 0, written branch-free so loops over it vectorize.
// Range reduction by ln 2 and a degree-6 polynomial; relative error is a
// few float ulp. Doubles use the library exp.
inline float exp_nonpositive(float x) {
  x = x < -87.0f ? -87.0f : x;
  // Adding 1.5 * 2^23 rounds to an integer held in the low mantissa bits.
  constexpr float kShifter = 12582912.0f;
  const float shifted = x * 1.44269504088896341f + kShifter;
  const float n = shifted - kShifter;
  float r = x - n * 0.693359375f;
  r = r + n * 2.12194440e-4f;
  float p = 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  p = p * r * r + r + 1.0f;
  std::int32_t bits;
  std::memcpy(&bits, &shifted, sizeof bits);
  bits = (bits - 0x4B400000 + 127) << 23;
  float scale;
  std::memcpy(&scale, &bits, sizeof scale);
  return p * scale;
}

inline double exp_nonpositive(double x) { return std::exp(x); }

// y[i] = exp(x[i] - shift) for all i, returning the sum of the results.
template <typename T>
inline T exp_shifted(T* x, std::size_t n, T shift) {
  T total = T(0);
#pragma omp simd reduction(+ : total)
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = exp_nonpositive(x[i] - shift);
    total += x[i];
  }
  return total;
}

namespace detail {

// MR x NR register tile: c += sum_p a(r, p) * b(p, j) over one k-panel.
// a(r, p) lives at a[r * ais + p * aps]; b rows are ldb apart.
template <typename T, std::size_t MR, std::size_t NR>
inline void micro_tile(std::size_t kc, std::size_t nr, const T* a, std::size_t ais, std::size_t aps, const T* b,
                       std::size_t ldb, T* c, std::size_t ldc) {
  T acc[MR][NR] = {};
  for (std::size_t p = 0; p < kc; ++p) {
    const T* __restrict bp = b + p * ldb;
    for (std::size_t r = 0; r < MR; ++r) {
      const T av = a[r * ais + p * aps];
      if (nr == NR) {
#pragma omp simd
        for (std::size_t j = 0; j < NR; ++j) acc[r][j] += av * bp[j];
      } else {
        for (std::size_t j = 0; j < nr; ++j) acc[r][j] += av * bp[j];
      }
    }
  }
  for (std::size_t r = 0; r < MR; ++r)
    for (std::size_t j = 0; j < nr; ++j) c[r * ldc + j] += acc[r][j];
}

template <typename T, std::size_t MR>
inline void row_panel(std::size_t kc, std::size_t n, const T* a, std::size_t ais, std::size_t aps, const T* b,
                      T* c) {
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) micro_tile<T, MR, 16>(kc, 16, a, ais, aps, b + j, n, c + j, n);
  for (; j + 8 <= n; j += 8) micro_tile<T, MR, 8>(kc, 8, a, ais, aps, b + j, n, c + j, n);
  if (j < n) micro_tile<T, MR, 8>(kc, n - j, a, ais, aps, b + j, n, c + j, n);
}

// C[m x n] += A * B with A addressed through (ais, aps) strides and B
// row-major [k x n]. Blocked over k so panels stay cache resident; every
// output element sums its k terms in a fixed order.
template <typename T>
void gemm_strided(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t ais, std::size_t aps,
                  const T* b, T* c) {
  constexpr std::size_t kc_max = 256, mr = 4;
  for (std::size_t k0 = 0; k0 < k; k0 += kc_max) {
    const std::size_t kc = std::min(kc_max, k - k0);
    const T* bk = b + k0 * n;
    std::size_t i = 0;
    for (; i + mr <= m; i += mr) row_panel<T, mr>(kc, n, a + i * ais + k0 * aps, ais, aps, bk, c + i * n);
    for (; i < m; ++i) row_panel<T, 1>(kc, n, a + i * ais + k0 * aps, ais, aps, bk, c + i * n);
  }
}

}  // namespace detail

// C[m x n] (+)= A[m x k] * B[k x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  detail::gemm_strided(m, n, k, a, k, 1, b, c);
}

// C[m x n] (+)= A^T * B with A stored [k x m], B stored [k x n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  detail::gemm_strided(m, n, k, a, 1, m, b, c);
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  constexpr std::size_t kTile = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kTile) {
    for (std::size_t j0 = 0; j0 < cols; j0 += kTile) {
      const std::size_t i1 = std::min(rows, i0 + kTile);
      const std::size_t j1 = std::min(cols, j0 + kTile);
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * cols + j];
    }
  }
}

// C[m x n] (+)= A * B^T with A stored [m x k], B stored [n x k]
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  std::vector<T> bt(k * n);
  transpose(n, k, b, bt.data());
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

}  // namespace hylog::kernels
