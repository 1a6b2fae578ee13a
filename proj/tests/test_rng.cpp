#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "nvmap/rng.hpp"

using nvmap::CounterRng;
using nvmap::mix64;

static_assert(mix64(0) == 0xe220a8397b1dcdafULL);

TEST(CounterRng, ReproducibleFromKey) {
  CounterRng a(1, 2, 3), b(1, 2, 3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
  EXPECT_EQ(a.counter(), 100u);
}

TEST(CounterRng, KeysSeparateStreams) {
  std::set<std::uint64_t> first;
  for (std::uint64_t seed = 0; seed < 4; ++seed)
    for (std::uint64_t stream = 0; stream < 4; ++stream)
      for (std::uint64_t sub = 0; sub < 4; ++sub) first.insert(CounterRng(seed, stream, sub)());
  EXPECT_EQ(first.size(), 64u);
}

TEST(CounterRng, UniformMoments) {
  CounterRng rng(9, 0, 0);
  const int n = 200000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sq += u * u;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.5, 4 * std::sqrt(1.0 / 12 / n));
  EXPECT_NEAR(sq / n - mean * mean, 1.0 / 12, 2e-3);
}

TEST(CounterRng, UniformIntCoversInclusiveRange) {
  CounterRng rng(4, 5, 6);
  std::array<int, 20> hist{};
  for (int i = 0; i < 40000; ++i) {
    const auto k = rng.uniform_int(1, 20);
    ASSERT_GE(k, 1);
    ASSERT_LE(k, 20);
    ++hist[static_cast<std::size_t>(k - 1)];
  }
  for (int h : hist) EXPECT_NEAR(h, 2000, 5 * std::sqrt(2000.0));
  EXPECT_EQ(rng.uniform_int(7, 7), 7);
}

TEST(CounterRng, DrivesStandardDistributions) {
  CounterRng rng(1, 1, 1);
  std::binomial_distribution<int> bin(1000, 0.25);
  double sum = 0;
  for (int i = 0; i < 5000; ++i) sum += bin(rng);
  EXPECT_NEAR(sum / 5000, 250.0, 1.0);
}
