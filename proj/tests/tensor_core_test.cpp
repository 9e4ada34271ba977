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

GradCheckOptions tight() {
  GradCheckOptions o;
  o.tolerance = 1e-5;
  o.max_coords = 64;
  return o;
}

TEST(TensorTest, ConstructorRejectsLengthMismatch) {
  EXPECT_THROW(Tensor<double>(Shape{2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor<double>(Shape{2, 0}, std::vector<double>{}), ShapeError);
}

TEST(TensorTest, GradShapeMirrorsData) {
  auto w = random_param(Shape{3, 4}, 1);
  sum(square(w)).backward();
  ASSERT_TRUE(w.has_grad());
  EXPECT_EQ(w.grad().size(), w.numel());
}

TEST(ElementwiseTest, AdditiveIdentity) {
  Tensor<double> a(Shape{3}, {1, 2, 3});
  auto y = add(a, Tensor<double>::zeros(Shape{3}));
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{1, 2, 3}));
}

TEST(ElementwiseTest, ChannelBroadcastScalesEachChannel) {
  Tensor<double> a(Shape{1, 1, 4}, {1, 2, 3, 4});
  auto b = random_tensor(Shape{8, 8, 4}, 2);
  auto y = mul(a, b);
  ASSERT_EQ(y.shape(), (Shape{8, 8, 4}));
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_DOUBLE_EQ(y[i], b[i] * double(i % 4 + 1));
}

TEST(ElementwiseTest, IncompatibleShapesNameBoth) {
  auto a = random_tensor(Shape{2, 3}, 1), b = random_tensor(Shape{4, 3}, 2);
  try {
    add(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2,3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(4,3)"), std::string::npos) << msg;
  }
}

TEST(ElementwiseTest, GradOfSumProductIsOtherOperand) {
  auto a = random_param(Shape{3, 5}, 3), b = random_tensor(Shape{3, 5}, 4);
  sum(mul(a, b)).backward();
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_DOUBLE_EQ(a.grad()[i], b[i]);
  auto r = check_gradients([&] { return mul(a, b); }, {{"a", a}}, tight());
  EXPECT_TRUE(r.pass) << r.max_error << " " << r.worst;
}

// The broadcast operand's gradient must equal the explicit tiling reduction.
TEST(ElementwiseTest, BroadcastBackwardMatchesTiling) {
  auto a = random_param(Shape{1, 3, 1}, 5);
  auto b = random_tensor(Shape{4, 3, 2}, 6);
  auto g = random_tensor(Shape{4, 3, 2}, 7);
  sum(mul(mul(a, b), g)).backward();
  for (std::size_t j = 0; j < 3; ++j) {
    double expect = 0;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t k = 0; k < 2; ++k) expect += b[(i * 3 + j) * 2 + k] * g[(i * 3 + j) * 2 + k];
    EXPECT_NEAR(a.grad()[j], expect, 1e-12);
  }
}

TEST(ElementwiseTest, NonFiniteResultIsAnError) {
  Tensor<double> one(Shape{1}, {1.0}), zero(Shape{1}, {0.0});
  EXPECT_THROW(div(one, zero), NumericalError);
}

TEST(MatmulTest, IdentityAndScalar) {
  std::vector<double> eye(9, 0);
  for (int i = 0; i < 3; ++i) eye[i * 4] = 1;
  auto m = random_tensor(Shape{3, 4}, 8);
  EXPECT_TRUE(bit_equal(matmul(Tensor<double>(Shape{3, 3}, eye), m), m));
  EXPECT_DOUBLE_EQ(matmul(Tensor<double>(Shape{1, 1}, {2}), Tensor<double>(Shape{1, 1}, {3})).item(), 6.0);
}

TEST(MatmulTest, Gradcheck) {
  auto a = random_param(Shape{4, 5}, 9), b = random_param(Shape{5, 3}, 10);
  auto r = check_gradients([&] { return matmul(a, b); }, {{"a", a}, {"b", b}}, tight());
  EXPECT_TRUE(r.pass) << r.max_error << " " << r.worst;
}

TEST(MatmulTest, InnerDimensionMismatch) {
  EXPECT_THROW(matmul(random_tensor(Shape{2, 3}, 1), random_tensor(Shape{4, 2}, 2)), ShapeError);
}

TEST(ConvTest, DiracKernelIsIdentity) {
  std::vector<double> k(9, 0);
  k[4] = 1;
  auto x = random_tensor(Shape{5, 7, 1}, 11);
  auto y = conv2d(x, Tensor<double>(Shape{3, 3, 1, 1}, k), Tensor<double>(), 1, 1);
  EXPECT_TRUE(bit_equal(y, x));
}

TEST(ConvTest, StrideTwoHalvesResolution) {
  auto y = conv2d(random_tensor(Shape{8, 8, 2}, 1), random_tensor(Shape{4, 4, 2, 3}, 2), Tensor<double>(), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{4, 4, 3}));
}

TEST(ConvTest, Gradcheck) {
  auto x = random_param(Shape{6, 6, 2}, 12), w = random_param(Shape{3, 3, 2, 3}, 13), b = random_param(Shape{3}, 14);
  auto r = check_gradients([&] { return conv2d(x, w, b, 1, 1); }, {{"x", x}, {"w", w}, {"b", b}}, tight());
  EXPECT_TRUE(r.pass) << r.max_error << " " << r.worst;
}

TEST(ConvTest, ChannelMismatchThrows) {
  EXPECT_THROW(conv2d(random_tensor(Shape{6, 6, 2}, 1), random_tensor(Shape{3, 3, 3, 1}, 2), Tensor<double>(), 1, 1),
               ShapeError);
}

TEST(ConvTransposeTest, StrideTwoDoublesResolution) {
  auto y = conv_transpose2d(random_tensor(Shape{4, 4, 3}, 1), random_tensor(Shape{4, 4, 2, 3}, 2), Tensor<double>(),
                            2, 1);
  EXPECT_EQ(y.shape(), (Shape{8, 8, 2}));
}

// <conv(x), y> == <x, conv^T(y)> with the same kernel.
TEST(ConvTransposeTest, AdjointOfConv) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto x = random_tensor(Shape{2, 8, 8, 3}, 100 + seed);
    auto w = random_tensor(Shape{4, 4, 3, 5}, 200 + seed);
    auto y = random_tensor(Shape{2, 4, 4, 5}, 300 + seed);
    const auto cx = conv2d(x, w, Tensor<double>(), 2, 1);
    const auto ty = conv_transpose2d(y, w, Tensor<double>(), 2, 1);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < cx.numel(); ++i) lhs += cx[i] * y[i];
    for (std::size_t i = 0; i < x.numel(); ++i) rhs += x[i] * ty[i];
    EXPECT_NEAR(lhs, rhs, 1e-6 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(ConvTransposeTest, Gradcheck) {
  auto x = random_param(Shape{4, 4, 3}, 15), w = random_param(Shape{4, 4, 2, 3}, 16), b = random_param(Shape{2}, 17);
  auto r = check_gradients([&] { return conv_transpose2d(x, w, b, 2, 1); }, {{"x", x}, {"w", w}, {"b", b}}, tight());
  EXPECT_TRUE(r.pass) << r.max_error << " " << r.worst;
}

TEST(PoolTest, ConstantMapStaysConstant) {
  for (std::size_t f : {1, 2, 4}) {
    auto y = avgpool2d(Tensor<double>::full(Shape{8, 8, 2}, 0.37), f);
    EXPECT_EQ(y.shape(), (Shape{8 / f, 8 / f, 2}));
    for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 0.37);
  }
}

TEST(PoolTest, GlobalMaxFindsSpike) {
  auto x = Tensor<double>::zeros(Shape{4, 4, 2});
  std::vector<double> v(x.data().begin(), x.data().end());
  v[(2 * 4 + 1) * 2 + 1] = 5.0;
  auto y = global_max_pool(Tensor<double>(x.shape(), v));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2}));
  EXPECT_DOUBLE_EQ(y[0], 0.0);
  EXPECT_DOUBLE_EQ(y[1], 5.0);
}

TEST(PoolTest, Gradcheck) {
  auto x = random_param(Shape{4, 4, 3}, 18);
  for (auto* fn : {+[](const Tensor<double>& t) { return avgpool2d(t, 2); },
                   +[](const Tensor<double>& t) { return global_avg_pool(t); },
                   +[](const Tensor<double>& t) { return global_max_pool(t); }}) {
    auto r = check_gradients([&] { return fn(x); }, {{"x", x}}, tight());
    EXPECT_TRUE(r.pass) << r.max_error << " " << r.worst;
  }
}

TEST(PoolTest, NonDividingFactorThrows) { EXPECT_THROW(avgpool2d(random_tensor(Shape{6, 6, 1}, 1), 4), ShapeError); }

TEST(UpsampleTest, FactorOneIsIdentity) {
  auto x = random_tensor(Shape{5, 3, 2}, 19);
  EXPECT_TRUE(bit_equal(upsample2d(x, 1), x));
}

TEST(UpsampleTest, ConstantMapStaysConstant) {
  auto y = upsample2d(Tensor<double>::full(Shape{2, 3, 4, 2}, -0.25), 4);
  EXPECT_EQ(y.shape(), (Shape{2, 12, 16, 2}));
  for (double v : y.data()) EXPECT_NEAR(v, -0.25, 1e-15);
}

TEST(UpsampleTest, Gradcheck) {
  auto x = random_param(Shape{3, 4, 2}, 20);
  auto r = check_gradients([&] { return upsample2d(x, 2); }, {{"x", x}}, tight());
  EXPECT_TRUE(r.pass) << r.max_error << " " << r.worst;
}

TEST(NormTest, SoftmaxOfZerosIsUniform) {
  auto y = softmax(Tensor<double>::zeros(Shape{3, 7}), 1);
  for (double v : y.data()) EXPECT_NEAR(v, 1.0 / 7, 1e-15);
}

TEST(NormTest, LayernormStandardizes) {
  auto x = random_tensor(Shape{6, 16}, 21, -3, 5);
  auto y = layernorm(x, Tensor<double>::ones(Shape{16}), Tensor<double>::zeros(Shape{16}), 1);
  for (std::size_t r = 0; r < 6; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 16; ++c) m += y[r * 16 + c];
    m /= 16;
    for (std::size_t c = 0; c < 16; ++c) v += (y[r * 16 + c] - m) * (y[r * 16 + c] - m);
    v /= 16;
    EXPECT_NEAR(m, 0.0, 1e-6);
    // Epsilon in the denominator pulls variance slightly below one.
    EXPECT_NEAR(v, 1.0, 1e-4);
  }
}

TEST(NormTest, SigmoidAtZero) { EXPECT_DOUBLE_EQ(sigmoid(Tensor<double>::scalar(0.0)).item(), 0.5); }

TEST(NormTest, Gradcheck) {
  auto x = random_param(Shape{4, 6}, 22), g = random_param(Shape{6}, 23), b = random_param(Shape{6}, 24);
  auto r1 = check_gradients([&] { return softmax(x, 1); }, {{"x", x}}, tight());
  auto r2 = check_gradients([&] { return layernorm(x, g, b, 1); }, {{"x", x}, {"g", g}, {"b", b}}, tight());
  EXPECT_TRUE(r1.pass) << r1.max_error;
  EXPECT_TRUE(r2.pass) << r2.max_error;
}

TEST(ShapeOpsTest, ChannelConcat) {
  auto y = concat<double>({random_tensor(Shape{8, 8, 4}, 1), random_tensor(Shape{8, 8, 4}, 2)}, 2);
  EXPECT_EQ(y.shape(), (Shape{8, 8, 8}));
}

TEST(ShapeOpsTest, SpatialDiffOfConstantIsZero) {
  auto c = Tensor<double>::full(Shape{2, 5, 6, 3}, 0.8);
  const auto dx = spatial_diff_x(c), dy = spatial_diff_y(c);
  for (double v : dx.data()) EXPECT_EQ(v, 0.0);
  for (double v : dy.data()) EXPECT_EQ(v, 0.0);
}

TEST(ShapeOpsTest, Gradcheck) {
  auto x = random_param(Shape{3, 4, 2}, 25), y = random_param(Shape{3, 4, 1}, 26);
  for (auto f : std::vector<std::function<Tensor<double>()>>{
           [&] { return concat<double>({x, y}, 2); }, [&] { return spatial_diff_x(x); },
           [&] { return spatial_diff_y(x); }, [&] { return permute(x, {2, 0, 1}); }}) {
    auto r = check_gradients(f, {{"x", x}, {"y", y}}, tight());
    EXPECT_TRUE(r.pass) << r.max_error << " " << r.worst;
  }
}

TEST(BackwardTest, SumGivesOnes) {
  auto w = random_param(Shape{2, 3, 4}, 27);
  sum(w).backward();
  for (double g : w.grad()) EXPECT_EQ(g, 1.0);
}

TEST(BackwardTest, HalfSquaredNormGivesWeights) {
  auto w = random_param(Shape{5, 2}, 28);
  scale(sum(square(w)), 0.5).backward();
  for (std::size_t i = 0; i < w.numel(); ++i) EXPECT_EQ(w.grad()[i], w[i]);
}

TEST(BackwardTest, SharedSubgraphVisitedOnce) {
  auto w = random_param(Shape{4}, 29);
  auto h = mul(w, w);
  sum(add(h, h)).backward();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(w.grad()[i], 4 * w[i]);
}

TEST(BackwardTest, NonScalarLossThrows) {
  auto w = random_param(Shape{3}, 30);
  EXPECT_THROW(square(w).backward(), ShapeError);
}

TEST(BackwardTest, ConvLayernormGeluPipelineGradcheck) {
  auto x = random_param(Shape{6, 6, 2}, 31), w = random_param(Shape{3, 3, 2, 4}, 32);
  auto g = random_param(Shape{4}, 33), b = random_param(Shape{4}, 34);
  GradCheckOptions o;
  o.max_coords = 32;
  auto r = check_gradients([&] { return sum(gelu(layernorm(conv2d(x, w, Tensor<double>(), 1, 1), g, b, 2))); },
                           {{"x", x}, {"w", w}, {"g", g}, {"b", b}}, o);
  EXPECT_TRUE(r.pass) << r.max_error << " " << r.worst;
}

TEST(BackwardTest, NoGradGuardBuildsNoGraph) {
  auto w = random_param(Shape{3}, 35);
  NoGradGuard guard;
  auto y = sum(square(w));
  EXPECT_TRUE(y.is_leaf());
}

TEST(BackwardTest, RepeatedRunsAreBitIdentical) {
  auto run = [] {
    auto x = random_param(Shape{2, 8, 8, 3}, 36), w = random_param(Shape{3, 3, 3, 4}, 37);
    auto y = sum(gelu(conv2d(x, w, Tensor<double>(), 1, 1)));
    y.backward();
    return std::make_tuple(y.item(), std::vector<double>(x.grad().begin(), x.grad().end()),
                           std::vector<double>(w.grad().begin(), w.grad().end()));
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace hylog
