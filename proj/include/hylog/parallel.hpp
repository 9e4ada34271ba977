// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace hylog {

namespace detail {
inline std::atomic<unsigned>& thread_count_setting() {
  static std::atomic<unsigned> n{1};
  return n;
}
}  // namespace detail

// Worker count used by parallel_for. Defaults to 1 (fully serial).
inline void set_num_threads(unsigned n) { detail::thread_count_setting() = std::max(1u, n); }
inline unsigned num_threads() { return detail::thread_count_setting(); }

// Runs f(i) for i in [0, n). Each index is handled by exactly one worker,
// so callers that write disjoint outputs stay deterministic.
template <typename F>
void parallel_for(std::size_t n, F&& f) {
  const std::size_t workers = std::min<std::size_t>(num_threads(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) f(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace hylog
