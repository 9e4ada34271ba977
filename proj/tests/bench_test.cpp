// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "support.hpp"

namespace hylog {
namespace {

FlopModel model(std::uint64_t hw, std::uint64_t c, std::uint64_t g, std::uint64_t s) {
  return {hw, hw, c, g, s * s, 4, 4};
}

TEST(FlopModelTest, HybridCostsFiveSixtyFourths) {
  for (std::uint64_t hw : {32u, 64u, 128u}) {
    const auto m = model(hw, 16, 8, 2);
    const auto std_macs = attention_macs(AttnVariant::standard, m);
    EXPECT_EQ(std_macs, 2 * hw * hw * hw * hw * 16);
    EXPECT_EQ(attention_macs(AttnVariant::hybrid, m) * 64, std_macs * 5);
    EXPECT_EQ(attention_macs(AttnVariant::local, m) * 64, std_macs);
    EXPECT_EQ(attention_macs(AttnVariant::global, m) * 16, std_macs);
  }
}

TEST(FlopModelTest, SingleWindowNoReductionMatchesStandard) {
  const FlopModel m{16, 16, 8, 1, 1, 2, 4};
  const auto s = attention_macs(AttnVariant::standard, m);
  EXPECT_EQ(attention_macs(AttnVariant::local, m), s);
  EXPECT_EQ(attention_macs(AttnVariant::global, m), s);
  EXPECT_EQ(attention_macs(AttnVariant::hybrid, m), 2 * s);
}

TEST(FlopModelTest, ClosedFormMatchesEnumeration) {
  const FlopModel geometries[] = {model(32, 16, 8, 2), model(64, 8, 4, 2), model(48, 12, 6, 3),
                                  {24, 40, 8, 4, 4, 2, 4}, model(128, 16, 16, 4), model(8, 4, 1, 1)};
  for (const auto& m : geometries)
    EXPECT_EQ(local_macs_enumerated(m), attention_macs(AttnVariant::local, m)) << m.height << "x" << m.width;
}

TEST(FlopModelTest, CostGrowsWithSize) {
  for (auto v : {AttnVariant::standard, AttnVariant::local, AttnVariant::global, AttnVariant::hybrid,
                 AttnVariant::sequential}) {
    std::uint64_t prev = 0;
    for (std::uint64_t hw : {16u, 32u, 64u, 128u}) {
      const auto m = attention_macs(v, model(hw, 16, 8, 2));
      EXPECT_GT(m, prev) << to_string(v);
      prev = m;
    }
    EXPECT_GT(full_block_macs(v, model(32, 16, 8, 2)), attention_macs(v, model(32, 16, 8, 2)));
  }
}

TEST(FlopModelTest, InvalidGeometryThrows) {
  EXPECT_THROW(model(30, 16, 8, 2).validate(), ShapeError);
  EXPECT_THROW(model(32, 15, 8, 2).validate(), ShapeError);
  EXPECT_THROW((FlopModel{0, 8, 8, 1, 1, 1, 4}.validate()), std::invalid_argument);
  EXPECT_THROW(attention_macs(AttnVariant::hybrid, model(20, 16, 8, 2)), ShapeError);
}

TEST(BenchTest, ParsesSizes) {
  const auto s = parse_bench_size("128x64x16");
  EXPECT_EQ(s.height, 128u);
  EXPECT_EQ(s.width, 64u);
  EXPECT_EQ(s.channels, 16u);
  for (const char* bad : {"128x64", "128*64*16", "128x64x16x", "axbxc", ""})
    EXPECT_THROW(parse_bench_size(bad), std::invalid_argument) << bad;
}

TEST(BenchTest, VariantNamesRoundTrip) {
  for (auto v : {AttnVariant::standard, AttnVariant::local, AttnVariant::global, AttnVariant::hybrid,
                 AttnVariant::sequential})
    EXPECT_EQ(parse_attn_variant(to_string(v)), v);
  EXPECT_THROW(parse_attn_variant("sparse"), std::invalid_argument);
}

TEST(BenchTest, RecordsAndCsv) {
  BenchOptions o;
  o.grid_per_side = 4;
  o.heads = 2;
  const auto recs = bench(AttnVariant::hybrid, {{16, 16, 8}, {32, 32, 8}}, o);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].macs, attention_macs(AttnVariant::hybrid, flop_model_for({16, 16, 8}, o)));
  EXPECT_GT(recs[1].ns_median, 0u);
  std::ostringstream os;
  write_bench_csv(os, recs);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, kBenchHeader);
  std::getline(is, line);
  EXPECT_EQ(line.rfind("hybrid,16,16,8,", 0), 0u);
  EXPECT_EQ(line.substr(line.size() - 2), ",3");
}

TEST(BenchTest, RejectsBadOptions) {
  BenchOptions o;
  o.runs = 2;
  EXPECT_THROW(bench_one(AttnVariant::local, {32, 32, 8}, o), std::invalid_argument);
  o.runs = 3;
  EXPECT_THROW(bench_one(AttnVariant::local, {32, 48, 8}, o), ShapeError);
}

}  // namespace
}  // namespace hylog
