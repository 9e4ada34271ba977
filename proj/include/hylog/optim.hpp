// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hylog/layers.hpp"

namespace hylog {

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moments are kept per parameter, in the store's order.
template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::uint64_t t = 0;
  std::vector<std::string> names;
  std::vector<std::vector<T>> m, v;

  AdamState() = default;
  AdamState(const ParamStore<T>& store, AdamHyper h = {}) : hyper(h) {
    for (const auto& [name, p] : store.entries()) {
      names.push_back(name);
      m.emplace_back(p.numel(), T(0));
      v.emplace_back(p.numel(), T(0));
    }
  }
};

// One bias-corrected Adam step over every parameter of the store. Throws if
// the store changed shape since the state was built or a gradient is absent.
template <typename T>
void adam_step(ParamStore<T>& store, AdamState<T>& state) {
  auto& entries = store.entries();
  if (entries.size() != state.names.size()) {
    throw std::logic_error("optimizer state tracks " + std::to_string(state.names.size()) + " parameters, store has " +
                           std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, p] = entries[i];
    if (name != state.names[i] || p.numel() != state.m[i].size()) {
      throw std::logic_error("optimizer state out of sync at parameter " + name);
    }
    if (!p.has_grad()) throw std::logic_error("missing gradient for parameter " + name);
  }
  state.t += 1;
  const auto& h = state.hyper;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& p = entries[i].second;
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = h.beta1 * static_cast<double>(m[j]) + (1.0 - h.beta1) * gj;
      const double vj = h.beta2 * static_cast<double>(v[j]) + (1.0 - h.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double mhat = mj / c1, vhat = vj / c2;
      w[j] = static_cast<T>(static_cast<double>(w[j]) - h.lr * mhat / (std::sqrt(vhat) + h.eps));
    }
  }
}

}  // namespace hylog
