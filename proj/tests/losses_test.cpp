// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "support.hpp"

namespace hylog {
namespace {

using testing::random_param;
using testing::random_tensor;

Tensor<double> pattern(std::size_t h, std::size_t w, double (*f)(double, double, double)) {
  std::vector<double> v(h * w * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) v[(y * w + x) * 3 + c] = f(double(y), double(x), double(c));
  return Tensor<double>(Shape{h, w, 3}, std::move(v));
}

double checker(double y, double x, double) { return std::fmod(y + x, 2.0); }
double anti_checker(double y, double x, double) { return 1.0 - std::fmod(y + x, 2.0); }
double wave_a(double y, double x, double c) { return 0.5 + 0.4 * std::sin(0.7 * y + 1.3 * x + c); }
double wave_b(double y, double x, double c) { return 0.5 + 0.3 * std::cos(0.5 * y - 0.9 * x + 2 * c); }

TEST(L2LossTest, ZeroOnIdenticalInputs) {
  auto x = random_tensor(Shape{4, 4, 3}, 1);
  EXPECT_EQ(l2_loss(x, x).item(), 0.0);
}

TEST(L2LossTest, ConstantOffset) {
  auto t = random_tensor(Shape{5, 5, 3}, 2);
  EXPECT_NEAR(l2_loss(add_scalar(t, 0.1), t).item(), 0.01, 1e-15);
}

TEST(L2LossTest, GradientIsScaledResidual) {
  auto p = random_param(Shape{3, 4, 2}, 3), t = random_tensor(Shape{3, 4, 2}, 4);
  l2_loss(p, t).backward();
  for (std::size_t i = 0; i < p.numel(); ++i) EXPECT_NEAR(p.grad()[i], 2 * (p[i] - t[i]) / 24.0, 1e-15);
  auto r = check_gradients([&] { return l2_loss(p, t); }, {{"p", p}});
  EXPECT_TRUE(r.pass) << r.max_error;
}

TEST(L2LossTest, ShapeMismatchThrows) {
  EXPECT_THROW(l2_loss(random_tensor(Shape{2, 2, 3}, 1), random_tensor(Shape{2, 3, 3}, 2)), ShapeError);
}

TEST(SsimTest, SelfSimilarityIsOne) {
  auto x = random_tensor(Shape{2, 16, 20, 3}, 5, 0, 1);
  EXPECT_NEAR(ssim(x, x).item(), 1.0, 1e-6);
}

// Reference values from an independent SSIM implementation (Gaussian
// window, population covariance, valid region) on the same images.
TEST(SsimTest, MatchesReferenceOnFixedImages) {
  const auto cb = pattern(16, 16, checker), anti = pattern(16, 16, anti_checker);
  EXPECT_NEAR(ssim(cb, anti).item(), -0.996406468357, 1e-9);
  EXPECT_LT(ssim(cb, anti).item(), 0.5);
  EXPECT_NEAR(ssim(pattern(16, 16, wave_a), pattern(16, 16, wave_b)).item(), 0.011394902256, 1e-9);
}

TEST(SsimTest, Symmetric) {
  auto x = random_tensor(Shape{14, 12, 3}, 6, 0, 1), y = random_tensor(Shape{14, 12, 3}, 7, 0, 1);
  EXPECT_NEAR(ssim(x, y).item(), ssim(y, x).item(), 1e-6);
}

TEST(SsimTest, RejectsImagesSmallerThanWindow) {
  auto x = random_tensor(Shape{10, 16, 3}, 8, 0, 1);
  EXPECT_THROW(ssim(x, x), ShapeError);
}

TEST(SsimTest, LossGradcheck) {
  auto x = random_param(Shape{12, 13, 2}, 9, 0, 1);
  auto y = random_tensor(Shape{12, 13, 2}, 10, 0, 1);
  auto r = check_gradients([&] { return ssim_loss(x, y); }, {{"x", x}});
  EXPECT_TRUE(r.pass) << r.max_error << " " << r.worst;
}

TEST(EdgeLossTest, ZeroOnIdenticalAndOffsetMaps) {
  auto s = random_tensor(Shape{2, 6, 6, 3}, 11);
  EXPECT_EQ(edge_loss(s, s).item(), 0.0);
  EXPECT_EQ(edge_loss(Tensor<double>::full(Shape{6, 6, 3}, 0.2), Tensor<double>::full(Shape{6, 6, 3}, 0.9)).item(), 0.0);
}

// Two rows [0, 1, 3] have x-differences [1, 2, 0] each and no y-differences:
// norm sqrt(10) for that sample, zero for the flat second sample.
TEST(EdgeLossTest, PerSampleFlattenedNorm) {
  Tensor<double> s(Shape{2, 2, 3, 1}, {0, 1, 3, 0, 1, 3, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  const auto target = Tensor<double>::zeros(Shape{2, 2, 3, 1});
  EXPECT_NEAR(edge_loss(s, target).item(), std::sqrt(10.0) / 2, 1e-15);
}

TEST(EdgeLossTest, Gradcheck) {
  auto s = random_param(Shape{2, 5, 5, 3}, 12);
  auto g = random_tensor(Shape{2, 5, 5, 3}, 13);
  auto r = check_gradients([&] { return edge_loss(s, g); }, {{"s", s}});
  EXPECT_TRUE(r.pass) << r.max_error;
}

TEST(LossPropertyTest, AllLossesNonnegative) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto a = random_tensor(Shape{12, 12, 3}, seed, 0, 1), b = random_tensor(Shape{12, 12, 3}, seed + 100, 0, 1);
    EXPECT_GE(l2_loss(a, b).item(), 0.0);
    EXPECT_GE(ssim_loss(a, b).item(), 0.0);
    EXPECT_GE(edge_loss(a, b).item(), 0.0);
  }
}

class HybridLossTest : public ::testing::Test {
 protected:
  static NetworkOutputs<double> outputs(const Tensor<double>& d, const Tensor<double>& r, const Tensor<double>& s) {
    NetworkOutputs<double> o;
    o.dehazed = d;
    o.reflectance = r;
    o.shading = s;
    return o;
  }
  Tensor<double> clear = random_tensor(Shape{1, 12, 12, 3}, 14, 0, 1);
  Tensor<double> refl = random_tensor(Shape{1, 12, 12, 3}, 15, 0, 1);
  Tensor<double> shade = random_tensor(Shape{1, 12, 12, 3}, 16, 0, 1);
};

TEST_F(HybridLossTest, DefaultWeights) {
  const LossWeights w;
  EXPECT_EQ(w.reflectance, 1.0);
  EXPECT_EQ(w.shading, 1.0);
  EXPECT_EQ(w.dehaze, 1.5);
}

TEST_F(HybridLossTest, PerfectPredictionsGiveZero) {
  auto l = hybrid_loss(outputs(clear, refl, shade), {clear, refl, shade}, {});
  EXPECT_NEAR(l.total.item(), 0.0, 1e-12);
}

TEST_F(HybridLossTest, OnlyDehazeTermWeighted) {
  auto pred = random_tensor(Shape{1, 12, 12, 3}, 17, 0, 1);
  auto l = hybrid_loss(outputs(pred, refl, shade), {clear, refl, shade}, {});
  EXPECT_NEAR(l.reflectance, 0.0, 1e-12);
  EXPECT_NEAR(l.shading, 0.0, 1e-12);
  EXPECT_NEAR(l.total.item(), 1.5 * l.dehaze, 1e-12);
}

TEST_F(HybridLossTest, DisabledStreamsContributeNothing) {
  NetworkOutputs<double> o;
  o.dehazed = random_tensor(Shape{1, 12, 12, 3}, 18, 0, 1);
  auto l = hybrid_loss(o, {clear, Tensor<double>(), Tensor<double>()}, {});
  EXPECT_EQ(l.reflectance, 0.0);
  EXPECT_EQ(l.shading, 0.0);
  EXPECT_EQ(l.total.item(), 1.5 * l.dehaze);
}

TEST_F(HybridLossTest, LinearInEachWeight) {
  auto o = outputs(random_tensor(Shape{1, 12, 12, 3}, 19, 0, 1), random_tensor(Shape{1, 12, 12, 3}, 20, 0, 1),
                   random_tensor(Shape{1, 12, 12, 3}, 21, 0, 1));
  const auto base = hybrid_loss(o, {clear, refl, shade}, {});
  LossWeights w;
  w.dehaze = 3.0;
  EXPECT_NEAR(hybrid_loss(o, {clear, refl, shade}, w).total.item() - base.total.item(), 1.5 * base.dehaze, 1e-12);
  w = {};
  w.shading = 0.0;
  EXPECT_NEAR(base.total.item() - hybrid_loss(o, {clear, refl, shade}, w).total.item(), base.shading, 1e-12);
}

TEST_F(HybridLossTest, MissingTargetThrows) {
  auto o = outputs(clear, refl, shade);
  EXPECT_THROW(hybrid_loss(o, {clear, refl, Tensor<double>()}, {}), std::invalid_argument);
}

TEST(PsnrTest, AnalyticValues) {
  auto t = Tensor<double>::full(Shape{4, 4, 3}, 0.5);
  EXPECT_NEAR(psnr(add_scalar(t, 0.1), t), 20.0, 1e-9);
  EXPECT_NEAR(psnr(add_scalar(t, 1.0), t), 0.0, 1e-12);
  EXPECT_EQ(psnr(t, t), std::numeric_limits<double>::infinity());
}

}  // namespace
}  // namespace hylog
