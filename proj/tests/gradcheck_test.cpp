// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>

#include "hylog/gradcheck.hpp"

namespace hylog {

void PrintTo(const GradCase& c, std::ostream* os) { *os << c.module << "/" << c.name; }

namespace {

class GradientSuite : public ::testing::TestWithParam<GradCase> {};

TEST_P(GradientSuite, AnalyticMatchesFiniteDifference) {
  const auto r = GetParam().run(GradCheckOptions{});
  EXPECT_TRUE(r.pass) << r.module << "/" << r.name << " error " << r.max_error << " at " << r.worst;
  EXPECT_GT(r.coords, 0u);
}

INSTANTIATE_TEST_SUITE_P(All, GradientSuite, ::testing::ValuesIn(gradient_suite()),
                         [](const ::testing::TestParamInfo<GradCase>& info) {
                           std::string s = info.param.module + "_" + info.param.name;
                           for (auto& ch : s)
                             if (!std::isalnum(static_cast<unsigned char>(ch))) ch = '_';
                           return s;
                         });

TEST(GradientSuiteCoverage, EveryDifferentiableModuleHasCases) {
  std::set<std::string> seen;
  for (const auto& c : gradient_suite()) seen.insert(c.module);
  for (const auto& m : gradient_suite_modules()) EXPECT_TRUE(seen.count(m)) << m;
}

TEST(GradientCheckerTest, FlagsWrongGradient) {
  auto x = Tensor<double>::parameter({3}, {0.3, -0.2, 0.9});
  // A function whose backward is deliberately detached for one term.
  auto f = [&] { return add(mul(x, x), mul(x.detach(), x.detach())); };
  EXPECT_FALSE(check_gradients(f, {{"x", x}}).pass);
  EXPECT_TRUE(check_gradients([&] { return mul(x, x); }, {{"x", x}}).pass);
}

}  // namespace
}  // namespace hylog
