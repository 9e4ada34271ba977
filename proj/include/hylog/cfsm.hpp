// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

// Complementary feature selection: channel attention that gates the
// reflectance and shading decoder features before they are added to the
// dehazing decoder feature.
//
//   u      = d_prev + d_r + d_s
//   s_ave  = global_avg_pool(u),  s_max = global_max_pool(u)
//   t_X    = up_ave_X(relu(down_ave_X(s_ave))) + up_max_X(relu(down_max_X(s_max)))
//   a_X    = sigmoid(t_X)                      for X in {r, s}
//   out    = d_prev + a_r * d_r + a_s * d_s    (channelwise broadcast)

#pragma once

#include <cstddef>
#include <string>

#include "hylog/layers.hpp"

namespace hylog {

template <typename T>
struct CfsmResult {
  Tensor<T> output;
  Tensor<T> s_ave, s_max;
  Tensor<T> v_ave_r, v_max_r, v_ave_s, v_max_s;  // compact c/r vectors
  Tensor<T> a_r, a_s;
};

template <typename T>
Tensor<T> fuse_sum(const Tensor<T>& d_prev, const Tensor<T>& d_r, const Tensor<T>& d_s) {
  if (d_prev.shape() != d_r.shape() || d_prev.shape() != d_s.shape()) {
    throw ShapeError("fusion inputs differ in shape: " + to_string(d_prev.shape()) + ", " + to_string(d_r.shape()) +
                     ", " + to_string(d_s.shape()));
  }
  return add(add(d_prev, d_r), d_s);
}

template <typename T>
class Cfsm {
 public:
  // The 1x1 convolutions act on 1x1xc maps and are stored as linear maps.
  struct Stream {
    Linear<T> down_ave, down_max, up_ave, up_max;
  };

  Cfsm() = default;
  Cfsm(ParamStore<T>& store, const std::string& name, std::size_t channels, std::size_t reduction, Rng& rng)
      : channels_(channels), reduction_(reduction) {
    if (reduction == 0 || channels % reduction != 0) {
      throw ShapeError("CFSM channels " + std::to_string(channels) + " not divisible by reduction " +
                       std::to_string(reduction));
    }
    const std::size_t compact = channels / reduction;
    auto make = [&](const std::string& tag) {
      return Stream{Linear<T>(store, name + "." + tag + ".down_ave", channels, compact, rng),
                    Linear<T>(store, name + "." + tag + ".down_max", channels, compact, rng),
                    Linear<T>(store, name + "." + tag + ".up_ave", compact, channels, rng),
                    Linear<T>(store, name + "." + tag + ".up_max", compact, channels, rng)};
    };
    reflectance = make("r");
    shading = make("s");
  }

  std::size_t channels() const { return channels_; }
  std::size_t reduction() const { return reduction_; }

  CfsmResult<T> run(const Tensor<T>& d_prev, const Tensor<T>& d_r, const Tensor<T>& d_s) const {
    if (d_prev.shape() != d_r.shape() || d_prev.shape() != d_s.shape()) {
      throw ShapeError("CFSM inputs differ in shape: " + to_string(d_prev.shape()) + ", " + to_string(d_r.shape()) +
                       ", " + to_string(d_s.shape()));
    }
    if (d_prev.shape().back() != channels_) {
      throw ShapeError("CFSM built for " + std::to_string(channels_) + " channels, got " + to_string(d_prev.shape()));
    }
    CfsmResult<T> r;
    auto u = add(add(d_prev, d_r), d_s);
    r.s_ave = global_avg_pool(u);
    r.s_max = global_max_pool(u);
    r.v_ave_r = relu(reflectance.down_ave(r.s_ave));
    r.v_max_r = relu(reflectance.down_max(r.s_max));
    r.v_ave_s = relu(shading.down_ave(r.s_ave));
    r.v_max_s = relu(shading.down_max(r.s_max));
    r.a_r = sigmoid(add(reflectance.up_ave(r.v_ave_r), reflectance.up_max(r.v_max_r)));
    r.a_s = sigmoid(add(shading.up_ave(r.v_ave_s), shading.up_max(r.v_max_s)));
    r.output = add(add(d_prev, mul(r.a_r, d_r)), mul(r.a_s, d_s));
    return r;
  }

  Tensor<T> operator()(const Tensor<T>& d_prev, const Tensor<T>& d_r, const Tensor<T>& d_s) const {
    return run(d_prev, d_r, d_s).output;
  }

  Stream reflectance, shading;

 private:
  std::size_t channels_ = 0, reduction_ = 4;
};

}  // namespace hylog
