#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <vector>

#include "iaop/core.hpp"
#include "iaop/source.hpp"

using namespace iaop;

namespace {

// Reference SplitMix64 written in the usual stateful form.
struct RefSplitMix {
  std::uint64_t state;
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
};

}  // namespace

TEST(Rng, MatchesReferenceSplitMix64) {
  RngStream r(0);
  EXPECT_EQ(r.next_u64(), 0xE220A8397B1DCDAFull);
  for (std::uint64_t seed : {0ull, 1ull, 42ull, 0xDEADBEEFull}) {
    RefSplitMix ref{seed};
    RngStream s(seed);
    for (int i = 0; i < 100; ++i) ASSERT_EQ(s.next_u64(), ref.next());
  }
}

TEST(Rng, CounterAddressesPosition) {
  RngStream a(7);
  for (int i = 0; i < 5; ++i) a.next_u64();
  RngStream b(7, 5);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, ForkIgnoresPosition) {
  RngStream a(11);
  const RngStream f0 = a.fork(3);
  a.next_u64();
  a.next_u64();
  EXPECT_EQ(a.fork(3), f0);
  EXPECT_NE(a.fork(4), f0);
  RngStream x = a.fork(3), y = a.fork(4);
  EXPECT_NE(x.next_u64(), y.next_u64());
}

TEST(Rng, SplitAdvancesParent) {
  RngStream a(5), b(5);
  RngStream c1 = a.split();
  RngStream c2 = b.split();
  EXPECT_EQ(c1, c2);
  EXPECT_EQ(a.counter(), 1u);
  EXPECT_NE(a.split(), c1);
}

TEST(Rng, UniformRange) {
  RngStream r(3);
  double lo = 1, hi = 0, sum = 0;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.005);
  EXPECT_LT(lo, 0.001);
  EXPECT_GT(hi, 0.999);
}

TEST(Rng, BelowIsUniform) {
  RngStream r(9);
  for (std::uint32_t n : {1u, 2u, 3u, 7u, 10u}) {
    std::vector<int> hist(n, 0);
    const int draws = 70000;
    for (int i = 0; i < draws; ++i) {
      const auto v = r.below(n);
      ASSERT_LT(v, n);
      ++hist[v];
    }
    // Chi-square with n-1 degrees of freedom; 30 is far in the tail for n <= 10.
    double chi2 = 0;
    const double expected = static_cast<double>(draws) / n;
    for (int c : hist) chi2 += (c - expected) * (c - expected) / expected;
    EXPECT_LT(chi2, 30.0) << "n=" << n;
  }
}

TEST(Rng, BernoulliFrequency) {
  RngStream r(13);
  int ones = 0;
  for (int i = 0; i < 100000; ++i) ones += r.bernoulli(0.3);
  EXPECT_NEAR(ones / 100000.0, 0.3, 0.005);
  RngStream z(1);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_FALSE(z.bernoulli(0.0));
    ASSERT_TRUE(z.bernoulli(1.0));
  }
}

TEST(DiscountedReturn, HandValues) {
  const std::array<double, 3> ones{1, 1, 1};
  EXPECT_NEAR(discounted_return(ones, 0.95), 1 + 0.95 + 0.9025, 1e-12);
  EXPECT_DOUBLE_EQ(discounted_return(ones, 1.0), 3.0);
  EXPECT_DOUBLE_EQ(discounted_return(std::span<const double>{}, 0.5), 0.0);
  const std::array<double, 2> r{2, 4};
  EXPECT_DOUBLE_EQ(discounted_return(r, 0.0), 2.0);
}

TEST(Budget, RejectsNonPositive) {
  EXPECT_THROW(SimulatorBudget::simulations(0), ConfigError);
  EXPECT_THROW(SimulatorBudget::seconds(-1.0), ConfigError);
  EXPECT_EQ(SimulatorBudget::seconds(0.5).kind, SimulatorBudget::Kind::wall_clock_seconds);
  EXPECT_EQ(budget_kind_from_string(to_string(SimulatorBudget::Kind::simulation_count)),
            SimulatorBudget::Kind::simulation_count);
  EXPECT_THROW(budget_kind_from_string("minutes"), ConfigError);
}

TEST(SourceSpec, MixedRadixRoundTrip) {
  SourceSpec spec{{HeadSpec{HeadSpec::Kind::bernoulli, 2}, HeadSpec{HeadSpec::Kind::softmax, 3},
                   HeadSpec{HeadSpec::Kind::bernoulli, 2}}};
  EXPECT_EQ(spec.joint_size(), 12u);
  EXPECT_EQ(spec.total_logits(), 1 + 3 + 1);
  for (SourceValue j = 0; j < 12; ++j) {
    const auto v = spec.split(j);
    EXPECT_EQ(spec.join(v), j);
    for (std::size_t h = 0; h < 3; ++h) EXPECT_EQ(spec.value(j, h), v[h]);
  }
  // head 0 is least significant
  EXPECT_EQ(spec.join({1, 0, 0}), 1u);
  EXPECT_EQ(spec.join({0, 1, 0}), 2u);
  EXPECT_EQ(spec.join({0, 0, 1}), 6u);
  EXPECT_THROW(spec.join({0, 3, 0}), std::invalid_argument);
}

TEST(SourceSpec, BinaryPacksBits) {
  const auto spec = SourceSpec::binary(4);
  EXPECT_EQ(spec.join({1, 0, 1, 1}), 0b1101u);
}
