// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <numeric>

#include "support.hpp"

namespace hylog {
namespace {

using testing::bit_equal;
using testing::max_abs_diff;
using testing::random_param;
using testing::random_tensor;
using testing::zero_out;

class CfsmTest : public ::testing::Test {
 protected:
  CfsmTest() : rng(1), cfsm(store, "cfsm", 8, 4, rng) {}

  ParamStore<double> store;
  Rng rng;
  Cfsm<double> cfsm;
};

TEST(CfsmShapeTest, CompactWidthIsChannelsOverReduction) {
  ParamStore<double> store;
  Rng rng(2);
  Cfsm<double> c(store, "c", 64, 4, rng);
  auto x = random_tensor(Shape{4, 4, 64}, 3);
  auto r = c.run(x, x, x);
  EXPECT_EQ(r.v_ave_r.shape(), (Shape{1, 1, 16}));
  EXPECT_EQ(r.v_max_s.shape(), (Shape{1, 1, 16}));
  EXPECT_EQ(r.a_r.shape(), (Shape{1, 1, 64}));
}

TEST(CfsmShapeTest, ReductionMustDivideChannels) {
  ParamStore<double> store;
  Rng rng(4);
  EXPECT_THROW(Cfsm<double>(store, "c", 10, 4, rng), ShapeError);
}

TEST_F(CfsmTest, RejectsMismatchedInputs) {
  EXPECT_THROW(cfsm(random_tensor(Shape{4, 4, 8}, 1), random_tensor(Shape{4, 4, 8}, 2), random_tensor(Shape{2, 4, 8}, 3)),
               ShapeError);
  auto x = random_tensor(Shape{4, 4, 4}, 4);
  EXPECT_THROW(cfsm(x, x, x), ShapeError);
}

TEST_F(CfsmTest, OutputIsGatedSum) {
  auto d = random_tensor(Shape{2, 5, 5, 8}, 5), r = random_tensor(Shape{2, 5, 5, 8}, 6), s = random_tensor(Shape{2, 5, 5, 8}, 7);
  auto res = cfsm.run(d, r, s);
  auto rebuilt = add(mul(res.a_r, r), mul(res.a_s, s));
  EXPECT_LT(max_abs_diff(sub(res.output, d), rebuilt), 1e-12);
}

TEST_F(CfsmTest, ZeroComplementaryFeaturesPassThrough) {
  auto d = random_tensor(Shape{6, 6, 8}, 8);
  auto z = Tensor<double>::zeros(d.shape());
  EXPECT_TRUE(bit_equal(cfsm(d, z, z), d));
}

TEST_F(CfsmTest, ScoresAreChannelwiseProbabilities) {
  auto d = random_tensor(Shape{2, 6, 6, 8}, 9, -4, 4);
  auto res = cfsm.run(d, random_tensor(d.shape(), 10, -4, 4), random_tensor(d.shape(), 11, -4, 4));
  EXPECT_EQ(res.a_r.shape(), (Shape{2, 1, 1, 8}));
  for (const auto* a : {&res.a_r, &res.a_s})
    for (double v : a->data()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
}

TEST_F(CfsmTest, ScoresIgnoreSpatialArrangement) {
  const Shape shape{6, 6, 8};
  auto d = random_tensor(shape, 12), r = random_tensor(shape, 13), s = random_tensor(shape, 14);
  std::vector<std::size_t> p(36);
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), std::mt19937_64(15));
  auto shuffle = [&](const Tensor<double>& t) {
    std::vector<double> v(t.numel());
    for (std::size_t i = 0; i < 36; ++i)
      for (std::size_t c = 0; c < 8; ++c) v[i * 8 + c] = t[p[i] * 8 + c];
    return Tensor<double>(shape, v);
  };
  auto a = cfsm.run(d, r, s), b = cfsm.run(shuffle(d), shuffle(r), shuffle(s));
  EXPECT_LT(max_abs_diff(a.a_r, b.a_r), 1e-6);
  EXPECT_LT(max_abs_diff(a.a_s, b.a_s), 1e-6);
}

// Saturating every score at one turns the module into plain summation.
TEST_F(CfsmTest, SaturatedScoresReproduceSum) {
  for (auto* stream : {&cfsm.reflectance, &cfsm.shading}) {
    for (auto* lin : {&stream->down_ave, &stream->down_max, &stream->up_ave, &stream->up_max}) {
      zero_out(lin->weight);
      zero_out(lin->bias);
    }
    auto b = stream->up_ave.bias.mutable_data();
    std::fill(b.begin(), b.end(), 1000.0);
  }
  auto d = random_tensor(Shape{4, 4, 8}, 16), r = random_tensor(Shape{4, 4, 8}, 17), s = random_tensor(Shape{4, 4, 8}, 18);
  EXPECT_TRUE(bit_equal(cfsm(d, r, s), fuse_sum(d, r, s)));
}

TEST(FuseSumTest, ZerosGiveZeros) {
  auto z = Tensor<double>::zeros(Shape{3, 3, 2});
  const auto y = fuse_sum(z, z, z);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(FuseSumTest, Gradcheck) {
  auto d = random_param(Shape{3, 3, 4}, 19), r = random_param(Shape{3, 3, 4}, 20), s = random_param(Shape{3, 3, 4}, 21);
  GradCheckOptions o;
  o.tolerance = 1e-5;
  auto res = check_gradients([&] { return fuse_sum(d, r, s); }, {{"d", d}, {"r", r}, {"s", s}}, o);
  EXPECT_TRUE(res.pass) << res.max_error;
}

TEST_F(CfsmTest, Gradcheck) {
  auto d = random_param(Shape{2, 3, 3, 8}, 22), r = random_param(Shape{2, 3, 3, 8}, 23), s = random_param(Shape{2, 3, 3, 8}, 24);
  auto leaves = detail::store_leaves(store);
  leaves.insert(leaves.end(), {{"d", d}, {"r", r}, {"s", s}});
  auto res = check_gradients([&] { return cfsm(d, r, s); }, leaves);
  EXPECT_TRUE(res.pass) << res.max_error << " " << res.worst;
}

}  // namespace
}  // namespace hylog
