// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

// Named parameter storage and the small learned layers built on it.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hylog/linalg.hpp"
#include "hylog/ops.hpp"
#include "hylog/norm.hpp"
#include "hylog/spatial.hpp"
#include "hylog/tensor.hpp"

namespace hylog {

enum class Phase { train, infer };

using Rng = std::mt19937_64;

// Ordered, uniquely named set of trainable leaves. Handles returned by
// create() alias the stored tensors, so in-place optimizer updates are
// visible to every layer holding them.
template <typename T>
class ParamStore {
 public:
  Tensor<T> create(const std::string& name, Shape shape, std::vector<T> values) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    auto t = Tensor<T>::parameter(std::move(shape), std::move(values));
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, t);
    return t;
  }

  Tensor<T> uniform(const std::string& name, Shape shape, T bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
    std::vector<T> v(numel_of(shape));
    for (auto& x : v) x = static_cast<T>(dist(rng));
    return create(name, std::move(shape), std::move(v));
  }

  Tensor<T> constant(const std::string& name, Shape shape, T value) {
    const auto n = numel_of(shape);
    return create(name, std::move(shape), std::vector<T>(n, value));
  }

  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor<T>>>& entries() { return entries_; }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return entries_[it->second].second;
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return entries_[it->second].second;
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : entries_) t.zero_grad();
  }

  // Data-dependent initialization flags of layers owning parameters here.
  void add_init_flag(std::shared_ptr<bool> flag) { init_flags_.push_back(std::move(flag)); }
  bool all_initialized() const {
    for (const auto& f : init_flags_)
      if (!*f) return false;
    return true;
  }
  void mark_all_initialized() {
    for (auto& f : init_flags_) *f = true;
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::vector<std::shared_ptr<bool>> init_flags_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
T fan_in_bound(std::size_t fan_in) {
  return T(1) / std::sqrt(static_cast<T>(fan_in));
}

template <typename T>
struct Linear {
  Tensor<T> weight, bias;

  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : weight(store.uniform(name + ".weight", {in, out}, fan_in_bound<T>(in), rng)),
        bias(store.constant(name + ".bias", {out}, T(0))) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }
};

template <typename T>
struct Conv2d {
  Tensor<T> weight, bias;
  std::size_t stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(ParamStore<T>& store, const std::string& name, std::size_t k, std::size_t in, std::size_t out,
         std::size_t stride_, std::size_t pad_, Rng& rng)
      : weight(store.uniform(name + ".weight", {k, k, in, out}, fan_in_bound<T>(k * k * in), rng)),
        bias(store.constant(name + ".bias", {out}, T(0))),
        stride(stride_),
        pad(pad_) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, pad); }
};

template <typename T>
struct ConvTranspose2d {
  Tensor<T> weight, bias;
  std::size_t stride = 1, pad = 0;

  ConvTranspose2d() = default;
  // Kernel stored (k, k, out, in); fan-in counts the taps reaching one output.
  ConvTranspose2d(ParamStore<T>& store, const std::string& name, std::size_t k, std::size_t in, std::size_t out,
                  std::size_t stride_, std::size_t pad_, Rng& rng)
      : weight(store.uniform(name + ".weight", {k, k, out, in},
                             fan_in_bound<T>(std::max<std::size_t>(1, k * k * in / (stride_ * stride_))), rng)),
        bias(store.constant(name + ".bias", {out}, T(0))),
        stride(stride_),
        pad(pad_) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return conv_transpose2d(x, weight, bias, stride, pad); }
};

template <typename T>
struct LayerNorm {
  Tensor<T> gamma, beta;

  LayerNorm() = default;
  LayerNorm(ParamStore<T>& store, const std::string& name, std::size_t dim)
      : gamma(store.constant(name + ".gamma", {dim}, T(1))), beta(store.constant(name + ".beta", {dim}, T(0))) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return layernorm(x, gamma, beta, x.rank() - 1); }
};

// Activation normalization: y = scale * (x + bias) per channel. The first
// call in training phase sets bias/scale so that batch gets zero mean and
// unit standard deviation per channel; afterwards both are ordinary
// parameters.
template <typename T>
class ActNorm {
 public:
  Tensor<T> scale, bias;

  ActNorm() = default;
  ActNorm(ParamStore<T>& store, const std::string& name, std::size_t channels)
      : scale(store.constant(name + ".scale", {channels}, T(1))),
        bias(store.constant(name + ".bias", {channels}, T(0))),
        initialized_(std::make_shared<bool>(false)) {
    store.add_init_flag(initialized_);
  }

  bool initialized() const { return *initialized_; }
  void mark_initialized() { *initialized_ = true; }

  Tensor<T> operator()(const Tensor<T>& x, Phase phase) {
    if (!*initialized_) {
      if (phase == Phase::infer) throw std::logic_error("ActNorm used before data-dependent initialization");
      initialize_from(x);
    }
    return mul(add(x, bias), scale);
  }

  void initialize_from(const Tensor<T>& x) {
    const std::size_t c = scale.numel();
    if (x.shape().back() != c) throw ShapeError("ActNorm channel mismatch for " + to_string(x.shape()));
    const std::size_t count = x.numel() / c;
    std::vector<double> mu(c, 0.0), var(c, 0.0);
    const T* px = x.raw();
    for (std::size_t p = 0; p < count; ++p)
      for (std::size_t k = 0; k < c; ++k) mu[k] += px[p * c + k];
    for (auto& m : mu) m /= static_cast<double>(count);
    for (std::size_t p = 0; p < count; ++p)
      for (std::size_t k = 0; k < c; ++k) {
        const double d = px[p * c + k] - mu[k];
        var[k] += d * d;
      }
    auto s = scale.mutable_data();
    auto b = bias.mutable_data();
    for (std::size_t k = 0; k < c; ++k) {
      const double sd = std::sqrt(var[k] / static_cast<double>(count));
      b[k] = static_cast<T>(-mu[k]);
      s[k] = static_cast<T>(1.0 / (sd + 1e-6));
    }
    *initialized_ = true;
  }

 private:
  std::shared_ptr<bool> initialized_;
};

}  // namespace hylog
