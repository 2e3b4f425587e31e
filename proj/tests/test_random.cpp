#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "gma3d/random.hpp"

using gma3d::Rng;
using gma3d::SplitMix64;

// Reference values from a separate implementation of the pinned algorithms.
TEST(SplitMix64, ReferenceSequence) {
  SplitMix64 g(0);
  EXPECT_EQ(g.next(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(g.next(), 0x6e789e6aa1b965f4ULL);
  EXPECT_EQ(g.next(), 0x06c45d188009454fULL);
}

TEST(Rng, XoshiroReferenceSequence) {
  Rng r(42);
  EXPECT_EQ(r.next(), 0x15780b2e0c2ec716ULL);
  EXPECT_EQ(r.next(), 0x6104d9866d113a7eULL);
  EXPECT_EQ(r.next(), 0xae17533239e499a1ULL);
  EXPECT_EQ(r.next(), 0xecb8ad4703b360a1ULL);
}

TEST(Rng, UniformUsesTop53Bits) {
  Rng r(42);
  EXPECT_EQ(r.uniform(), double(0x15780b2e0c2ec716ULL >> 11) * 0x1p-53);
  EXPECT_EQ(r.uniform(), double(0x6104d9866d113a7eULL >> 11) * 0x1p-53);
}

TEST(Rng, DeriveSeedReference) {
  EXPECT_EQ(gma3d::derive_seed(7, 0), 0x63cbe1e459320dd7ULL);
  EXPECT_EQ(gma3d::derive_seed(7, 1), 0x6078bf180ff8632fULL);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(123), b(123), c(124);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    differs = differs || x != c.next();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, NormalPairsShareOneDraw) {
  Rng a(5), b(5);
  const double n1 = a.normal();
  const double n2 = a.normal();
  const double u1 = 1.0 - b.uniform();
  const double u2 = b.uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  EXPECT_EQ(n1, r * std::cos(2.0 * M_PI * u2));
  EXPECT_EQ(n2, r * std::sin(2.0 * M_PI * u2));
  EXPECT_EQ(a.next(), b.next());
}

TEST(Rng, NormalMoments) {
  Rng r(9);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, IndexInRangeAndShuffleIsPermutation) {
  Rng r(3);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(r.index(7), 7u);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  r.shuffle(std::span<int>(v));
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}
