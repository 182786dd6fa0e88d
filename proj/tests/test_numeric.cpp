#include <cmath>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include <lsl/binary_io.hpp>
#include <lsl/numeric.hpp>
#include <lsl/random.hpp>
#include <lsl/text.hpp>

using namespace lsl;

TEST(Numeric, LogSumExpIsStableForHugeLogits) {
  Vec z(3);
  z << 1e4, 1e4, -1e4;
  EXPECT_NEAR(log_sum_exp(z), 1e4 + std::log(2.0), 1e-9);
  const Vec p = softmax(z);
  EXPECT_TRUE(p.allFinite());
  EXPECT_NEAR(p.sum(), 1.0, 1e-15);
}

TEST(Numeric, SigmoidAndSoftplusAgreeWithClosedForm) {
  for (double x : {-40.0, -3.0, 0.0, 0.5, 7.0, 40.0}) {
    EXPECT_NEAR(sigmoid(x), 1.0 / (1.0 + std::exp(-x)), 1e-15);
    EXPECT_NEAR(softplus(x), std::log1p(std::exp(x)), 1e-12);
  }
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_EQ(sigmoid(1000.0), 1.0);
}

TEST(Numeric, EntropyTreatsZeroMassAsZero) {
  Vec p(4);
  p << 0.5, 0.5, 0.0, 0.0;
  EXPECT_NEAR(entropy(p), std::log(2.0), 1e-15);
  Vec z(3);
  z << 0.3, -1.2, 2.0;
  EXPECT_NEAR(entropy_from_logits(z, softmax(z)), entropy(softmax(z)), 1e-14);
}

TEST(Random, StreamsAreReproducibleAndIndependent) {
  auto a = make_rng(7, 0), b = make_rng(7, 0), c = make_rng(7, 1);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a(), y = b(), z = c();
    EXPECT_EQ(x, y);
    differs = differs || x != z;
  }
  EXPECT_TRUE(differs);
}

TEST(Random, UniformIndexCoversRangeAndPermutationIsBijective) {
  auto rng = make_rng(3);
  std::set<std::size_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto k = uniform_index(rng, 7);
    ASSERT_LT(k, 7u);
    seen.insert(k);
  }
  EXPECT_EQ(seen.size(), 7u);
  const auto perm = permutation(50, rng);
  EXPECT_EQ(std::set<std::size_t>(perm.begin(), perm.end()).size(), 50u);
}

TEST(Random, NormalHasUnitMoments) {
  auto rng = make_rng(11);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = normal(rng);
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(BinaryIo, RoundTripsScalars) {
  std::stringstream buf;
  binary::put(buf, std::uint32_t{0xDEADBEEF});
  binary::put(buf, -2.5);
  binary::Reader r(buf);
  std::uint32_t u = 0;
  double d = 0;
  ASSERT_TRUE(r.get(u));
  ASSERT_TRUE(r.get(d));
  EXPECT_EQ(u, 0xDEADBEEFu);
  EXPECT_EQ(d, -2.5);
  EXPECT_EQ(r.offset(), 12u);
  EXPECT_TRUE(r.at_eof());
}

TEST(Text, KeyValuesIgnoreCommentsAndRejectJunk) {
  std::istringstream in("# comment\n a = 1 \n\nb=two # trailing\n");
  const auto kv = parse_key_values(in, "cfg");
  EXPECT_EQ(kv.at("a"), "1");
  EXPECT_EQ(kv.at("b"), "two");
  std::istringstream bad("a = 1\nnonsense\n");
  EXPECT_THROW(parse_key_values(bad, "cfg"), std::runtime_error);
}

TEST(Text, FormatDoubleRoundTripsAtSeventeenDigits) {
  auto rng = make_rng(5);
  for (int i = 0; i < 100; ++i) {
    const double x = normal(rng) * 1e3;
    EXPECT_EQ(std::stod(format_double(x, 17)), x);
  }
  EXPECT_EQ(split("a\tb\t", '\t').size(), 3u);
}
