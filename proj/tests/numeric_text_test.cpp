#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ppimtt/error.hpp"
#include "ppimtt/numeric_text.hpp"
#include "ppimtt/random.hpp"

namespace ppimtt {
namespace {

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(format_double(-2.5), "-2.5");
  EXPECT_EQ(format_float(0.1f), "0.1");

  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double v = std::ldexp(rng.uniform_real(-1.0, 1.0), static_cast<int>(rng.uniform_index(80)) - 40);
    EXPECT_EQ(parse_double(format_double(v)), v);
  }
}

TEST(ParseDouble, RejectsGarbage) {
  EXPECT_EQ(parse_double("1.5"), 1.5);
  EXPECT_EQ(parse_double("+1.5"), 1.5);
  EXPECT_EQ(parse_double("1e-3"), 1e-3);
  EXPECT_FALSE(parse_double(""));
  EXPECT_FALSE(parse_double("1.5x"));
  EXPECT_FALSE(parse_double("abc"));
}

TEST(ParseInteger, FullToken) {
  EXPECT_EQ(parse_integer("42"), 42);
  EXPECT_EQ(parse_integer("-7"), -7);
  EXPECT_FALSE(parse_integer("4.2"));
  EXPECT_FALSE(parse_integer(""));
}

TEST(ForEachToken, SplitsOnWhitespaceRuns) {
  std::vector<std::string> tokens;
  for_each_token("  a\tbb \r\n ccc  ", [&](std::string_view t) { tokens.emplace_back(t); });
  EXPECT_EQ(tokens, (std::vector<std::string>{"a", "bb", "ccc"}));
}

TEST(Rng, UniformIndexCoversRangeUnbiased) {
  Rng rng(11);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.uniform_index(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(Rng, RealsInUnitInterval) {
  Rng rng(12);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform_real();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, ShuffleIsAPermutationAndDeterministic) {
  std::vector<int> a(50), b;
  for (int i = 0; i < 50; ++i) a[i] = i;
  b = a;
  Rng r1(5), r2(5);
  r1.shuffle(std::span(a));
  r2.shuffle(std::span(b));
  EXPECT_EQ(a, b);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(DeriveSeed, StreamsDiffer) {
  EXPECT_NE(derive_seed(0, 1), derive_seed(0, 2));
  EXPECT_NE(derive_seed(0, 1), derive_seed(1, 1));
  EXPECT_EQ(derive_seed(9, 3), derive_seed(9, 3));
}

TEST(Error, MessageCarriesKind) {
  try {
    fail(ErrorKind::MissingTensor, "b_f");
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingTensor);
    EXPECT_NE(std::string(e.what()).find("b_f"), std::string::npos);
    return;
  }
  FAIL() << "fail() returned";
}

}  // namespace
}  // namespace ppimtt
