// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "support.hpp"

namespace hylog {
namespace {

using testing::bit_equal;
using testing::max_abs_diff;
using testing::random_param;
using testing::random_tensor;
using testing::zero_out;

ModelConfig small_config(std::size_t hw = 16, std::size_t stages = 2, std::size_t c0 = 4) {
  ModelConfig c;
  c.height = c.width = hw;
  c.stages = stages;
  c.base_channels = c0;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.grid_per_side = 4;
  c.cfsm_reduction = 2;
  return c;
}

TEST(ModelConfigTest, StageGeometryFallsBackToCoarserGrid) {
  ModelConfig c;
  c.height = c.width = 64;
  EXPECT_EQ(c.stage_geometry(0).window, 8u);
  EXPECT_EQ(c.stage_geometry(3).height, 8u);
  EXPECT_EQ(c.stage_geometry(3).window, 1u);
  c.height = c.width = 32;
  c.stages = 2;
  EXPECT_EQ(c.stage_geometry(2).grid_per_side(), 8u);
}

TEST(ModelConfigTest, RejectsBadGeometry) {
  auto c = small_config();
  c.height = 20;
  EXPECT_THROW(c.validate(), ShapeError);
  c = small_config();
  c.heads = 3;
  EXPECT_THROW(c.validate(), ShapeError);
  c = small_config();
  c.cfsm_reduction = 3;
  EXPECT_THROW(c.validate(), ShapeError);
  c.fusion = FusionMode::sum;
  EXPECT_NO_THROW(c.validate());
}

TEST(EncoderTest, ChannelLadderAtDefaultWidths) {
  ModelConfig c;
  c.height = c.width = 64;
  DehazeNet<float> net(c, 1);
  auto e = net.encode(random_tensor<float>(Shape{1, 64, 64, 3}, 2, 0, 1), Phase::train);
  ASSERT_EQ(e.size(), 4u);
  EXPECT_EQ(e[0].shape(), (Shape{1, 64, 64, 16}));
  EXPECT_EQ(e[1].shape(), (Shape{1, 32, 32, 32}));
  EXPECT_EQ(e[2].shape(), (Shape{1, 16, 16, 64}));
  EXPECT_EQ(e[3].shape(), (Shape{1, 8, 8, 128}));
}

TEST(EncoderTest, RejectsWrongImageSize) {
  DehazeNet<float> net(small_config(), 1);
  EXPECT_THROW(net.forward(random_tensor<float>(Shape{1, 8, 8, 3}, 1), Phase::train), ShapeError);
}

TEST(NetworkTest, DecodersMirrorEncoder) {
  for (std::size_t stages : {1, 2, 3}) {
    DehazeNet<float> net(small_config(32, stages, 4), 3);
    auto out = net.forward(random_tensor<float>(Shape{2, 32, 32, 3}, 4, 0, 1), Phase::train);
    for (std::size_t z = 1; z <= stages; ++z) {
      EXPECT_EQ(out.decoder_r[z].shape(), out.encoder[z].shape()) << z;
      EXPECT_EQ(out.decoder_s[z].shape(), out.encoder[z].shape()) << z;
      EXPECT_EQ(out.decoder_d[z].shape(), out.encoder[z].shape()) << z;
      EXPECT_EQ(out.encoder[z].dim(3), 4u << z);
      EXPECT_EQ(out.encoder[z].dim(1), 32u >> z);
    }
  }
}

TEST(NetworkTest, OutputsAreImagesStrictlyInsideUnitRange) {
  DehazeNet<float> net(small_config(), 5);
  auto x = random_tensor<float>(Shape{2, 16, 16, 3}, 6, 0, 1);
  auto out = net.forward(x, Phase::train);
  ASSERT_TRUE(out.reflectance && out.shading);
  for (const auto* t : {&out.dehazed, &*out.reflectance, &*out.shading}) {
    EXPECT_EQ(t->shape(), x.shape());
    for (float v : t->data()) {
      EXPECT_GT(v, 0.f);
      EXPECT_LT(v, 1.f);
    }
  }
}

TEST(NetworkTest, DecoderModesSelectOutputs) {
  struct Case {
    DecoderMode mode;
    bool r, s;
  };
  for (auto c : {Case{DecoderMode::full, true, true}, Case{DecoderMode::without_rs, false, false},
                 Case{DecoderMode::with_r, true, false}, Case{DecoderMode::with_s, false, true}}) {
    auto cfg = small_config();
    cfg.decoders = c.mode;
    DehazeNet<float> net(cfg, 7);
    auto out = net.forward(random_tensor<float>(Shape{1, 16, 16, 3}, 8, 0, 1), Phase::train);
    EXPECT_EQ(out.reflectance.has_value(), c.r) << to_string(c.mode);
    EXPECT_EQ(out.shading.has_value(), c.s) << to_string(c.mode);
    EXPECT_EQ(out.dehazed.shape(), (Shape{1, 16, 16, 3}));
    EXPECT_EQ(net.fusions.empty(), c.mode == DecoderMode::without_rs);
  }
}

TEST(NetworkTest, WithoutComplementaryDecodersHasNoFusionParameters) {
  auto cfg = small_config();
  cfg.decoders = DecoderMode::without_rs;
  DehazeNet<float> net(cfg, 9);
  for (const auto& [name, p] : net.store.entries()) {
    EXPECT_EQ(name.find("fuse_bottleneck"), std::string::npos);
    EXPECT_EQ(name.find("decoder_r"), std::string::npos);
    EXPECT_EQ(name.find("decoder_s"), std::string::npos);
  }
}

// A CFSM network whose scores are pinned at one behaves like the summing
// network that shares all other weights.
TEST(NetworkTest, SaturatedCfsmMatchesSumFusion) {
  auto cfg = small_config();
  DehazeNet<double> gated(cfg, 10);
  cfg.fusion = FusionMode::sum;
  DehazeNet<double> summed(cfg, 10);
  for (auto& f : gated.fusions) {
    if (f.cfsm.channels() == 0) continue;
    for (auto* st : {&f.cfsm.reflectance, &f.cfsm.shading})
      for (auto* lin : {&st->down_ave, &st->down_max, &st->up_ave, &st->up_max}) {
        zero_out(lin->weight);
        zero_out(lin->bias);
        if (lin == &st->up_ave) std::ranges::fill(lin->bias.mutable_data(), 1000.0);
      }
  }
  for (auto& [name, p] : summed.store.entries()) {
    const auto src = gated.store.at(name).data();
    std::ranges::copy(src, p.mutable_data().begin());
  }
  auto x = random_tensor(Shape{2, 16, 16, 3}, 11, 0, 1);
  auto a = gated.forward(x, Phase::train);
  auto b = summed.forward(x, Phase::train);
  EXPECT_TRUE(bit_equal(a.dehazed, b.dehazed));
  EXPECT_TRUE(bit_equal(*a.reflectance, *b.reflectance));
}

TEST(NetworkTest, EncoderReceivesGradientFromEveryTask) {
  DehazeNet<double> net(small_config(), 12);
  auto x = random_tensor(Shape{1, 16, 16, 3}, 13, 0, 1);
  const std::string probe = "encoder.extract.conv.weight";
  std::vector<std::vector<double>> per_task;
  std::vector<double> together;
  for (int task = 0; task < 4; ++task) {
    net.store.zero_grad();
    auto out = net.forward(x, Phase::train);
    Tensor<double> loss;
    switch (task) {
      case 0: loss = sum(out.dehazed); break;
      case 1: loss = sum(*out.reflectance); break;
      case 2: loss = sum(*out.shading); break;
      default: loss = add(add(sum(out.dehazed), sum(*out.reflectance)), sum(*out.shading));
    }
    loss.backward();
    const auto g = net.store.at(probe).grad();
    ASSERT_FALSE(g.empty()) << task;
    (task < 3 ? per_task.emplace_back() : together).assign(g.begin(), g.end());
  }
  for (const auto& g : per_task) EXPECT_TRUE(std::ranges::any_of(g, [](double v) { return v != 0.0; }));
  for (std::size_t i = 0; i < together.size(); ++i)
    EXPECT_NEAR(together[i], per_task[0][i] + per_task[1][i] + per_task[2][i], 1e-10);
}

TEST(ActNormTest, InitializationStandardizesFirstBatch) {
  ParamStore<double> store;
  ActNorm<double> norm(store, "n", 3);
  auto x = random_tensor(Shape{2, 5, 5, 3}, 14, -2, 7);
  auto y = norm(x, Phase::train);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t i = c; i < y.numel(); i += 3) m += y[i];
    m /= 50;
    for (std::size_t i = c; i < y.numel(); i += 3) v += (y[i] - m) * (y[i] - m);
    EXPECT_NEAR(m, 0.0, 1e-5);
    EXPECT_NEAR(std::sqrt(v / 50), 1.0, 1e-5);
  }
  EXPECT_TRUE(norm.initialized());
  EXPECT_TRUE(store.all_initialized());
}

TEST(ActNormTest, UnitScaleZeroBiasIsIdentity) {
  ParamStore<double> store;
  ActNorm<double> norm(store, "n", 2);
  norm.mark_initialized();
  auto x = random_tensor(Shape{3, 3, 2}, 15);
  EXPECT_TRUE(bit_equal(norm(x, Phase::infer), x));
}

TEST(ActNormTest, InferenceBeforeInitializationFails) {
  ParamStore<double> store;
  ActNorm<double> norm(store, "n", 2);
  EXPECT_THROW(norm(random_tensor(Shape{3, 3, 2}, 16), Phase::infer), std::logic_error);
}

TEST(ActNormTest, Gradcheck) {
  ParamStore<double> store;
  ActNorm<double> norm(store, "n", 3);
  auto x = random_param(Shape{4, 4, 3}, 17);
  norm(x, Phase::train);
  auto leaves = detail::store_leaves(store);
  leaves.emplace_back("x", x);
  GradCheckOptions o;
  o.tolerance = 1e-5;
  auto r = check_gradients([&] { return norm(x, Phase::infer); }, leaves, o);
  EXPECT_TRUE(r.pass) << r.max_error;
}

// Two stages at 16x16 with every parameter group sampled sparsely.
TEST(NetworkTest, EndToEndGradcheck) {
  DehazeNet<double> net(small_config(16, 2, 4), 18);
  auto x = random_param(Shape{1, 16, 16, 3}, 19, 0, 1);
  net.forward(x, Phase::train);
  Leaves leaves;
  const auto& entries = net.store.entries();
  for (std::size_t i = 0; i < entries.size(); i += 9) leaves.push_back(entries[i]);
  leaves.emplace_back("image", x);
  GradCheckOptions o;
  o.tolerance = 1e-3;
  o.max_coords = 3;
  auto r = check_gradients(
      [&] {
        auto out = net.forward(x, Phase::infer);
        return concat<double>({out.dehazed, *out.reflectance, *out.shading}, 3);
      },
      leaves, o);
  EXPECT_TRUE(r.pass) << r.max_error << " " << r.worst;
}

}  // namespace
}  // namespace hylog
