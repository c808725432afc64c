#include <gtest/gtest.h>

#include <random>

#include "ivf/gail_simon.hpp"
#include "ivf/simlab.hpp"
#include "oracles.hpp"

using namespace ivf;

namespace {

// Usable stratum with a prescribed estimate and se (table irrelevant to Q+
// except for the zero-se checks, so use an interior one).
StratumDelta synthetic(double est, double se) {
  StratumDelta s;
  s.table = TwoByTwo{5, 10, 5, 10};
  s.delta = {est, se, 10, 10};
  s.usable = true;
  return s;
}

StratifiedCounts two_strata(const JointCounts& a, const JointCounts& b) {
  StratifiedCounts s;
  s.strata.emplace(StratumKey{"a"}, a);
  s.strata.emplace(StratumKey{"b"}, b);
  return s;
}

}  // namespace

TEST(StratumDeltas, SingleStratumReducesToDelta) {
  const auto t = JointCounts::binary({4, 1, 2, 1, 2, 3, 2, 3});
  StratifiedCounts s;
  s.strata.emplace(StratumKey{}, t);
  const auto d = stratum_deltas(s, 0, 1);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_TRUE(d[0].usable);
  EXPECT_DOUBLE_EQ(d[0].delta.estimate, delta(t, 0, 1).estimate);
  EXPECT_DOUBLE_EQ(d[0].delta.se, delta(t, 0, 1).se);
}

TEST(StratumDeltas, EmptyArmUnusable) {
  const auto ok = JointCounts::binary({1, 1, 1, 1, 1, 1, 1, 1});
  const auto empty1 = JointCounts::binary({1, 2, 3, 4, 0, 0, 0, 0});
  const auto d = stratum_deltas(two_strata(ok, empty1), 1, 1);
  EXPECT_TRUE(d[0].usable);
  EXPECT_FALSE(d[1].usable);
  EXPECT_THROW(gs_test({d[1]}), EstimationError);
  const auto g = gs_test(d);
  EXPECT_EQ(g.k_used, 1);
  ASSERT_EQ(g.dropped.size(), 1u);
  EXPECT_EQ(g.dropped[0], StratumKey{"b"});
}

TEST(StratumDeltas, IdenticalStrata) {
  const auto t = JointCounts::binary({3, 1, 4, 1, 5, 9, 2, 6});
  const auto d = stratum_deltas(two_strata(t, t), 0, 0);
  EXPECT_DOUBLE_EQ(d[0].delta.estimate, d[1].delta.estimate);
  EXPECT_DOUBLE_EQ(d[0].delta.se, d[1].delta.se);
}

TEST(GsTest, AllNonPositiveIsOne) {
  const auto g = gs_test({synthetic(-0.1, 0.05), synthetic(0.0, 0.05), synthetic(-0.3, 0.1)});
  EXPECT_DOUBLE_EQ(g.q_plus, 0.0);
  EXPECT_DOUBLE_EQ(g.p_value, 1.0);
}

TEST(GsTest, OneStratumIsOneSidedNormal) {
  const auto g = gs_test({synthetic(0.196, 0.1)});
  EXPECT_NEAR(g.q_plus, 1.96 * 1.96, 1e-12);
  EXPECT_NEAR(g.p_value, oracle::normal_upper(1.96), 1e-9);
  EXPECT_NEAR(g.p_value, 0.025, 1e-4);
}

TEST(GsTest, TwoStrataQuadratureOracle) {
  const double q = 3.8416;
  const double expect = 0.25 * (2 * oracle::chi2_upper(q, 1) + oracle::chi2_upper(q, 2));
  EXPECT_NEAR(chi_bar_squared_upper_tail(q, 2), expect, 1e-9);
  const auto g = gs_test({synthetic(std::sqrt(q) * 0.1, 0.1), synthetic(-0.2, 0.1)});
  EXPECT_NEAR(g.p_value, expect, 1e-9);
}

TEST(GsTest, ChiBarAgainstQuadratureManyK) {
  for (int K : {1, 3, 5, 8})
    for (double q : {0.5, 2.0, 7.5, 15.0}) EXPECT_NEAR(chi_bar_squared_upper_tail(q, K), oracle::chi_bar_upper(q, K), 1e-8);
}

TEST(GsTest, ChiBarLargeKStable) {
  // 800 components: weights underflow in linear space, not in log space
  const double p = chi_bar_squared_upper_tail(5.0, 800);
  EXPECT_GT(p, 0.999);
  EXPECT_LE(p, 1.0);
}

TEST(GsTest, NonIncreasingInQ) {
  for (int K : {1, 2, 4, 10}) {
    double prev = 1.0;
    for (double q = 0.01; q < 40; q += 0.37) {
      const double p = chi_bar_squared_upper_tail(q, K);
      EXPECT_LE(p, prev + 1e-15);
      prev = p;
    }
  }
}

TEST(GsTest, DominanceBound) {
  for (int K : {1, 2, 3, 6})
    for (double q : {1e-9, 1e-3, 0.5}) EXPECT_LE(chi_bar_squared_upper_tail(q, K), 1.0 - std::pow(0.5, K) + 1e-12);
}

TEST(GsTest, ZeroSeConventions) {
  // p1 = 3/3, p0 = 0/4: raw se = 0 with a positive difference
  StratumDelta z;
  z.table = TwoByTwo{3, 3, 0, 4};
  z.delta = delta(*z.table);
  z.usable = true;
  ASSERT_EQ(z.delta.se, 0.0);
  const std::vector<StratumDelta> v{z, synthetic(0.1, 0.1)};

  const auto inf = gs_test(v, {ZeroSe::infinite, WeightBasis::usable});
  EXPECT_TRUE(std::isinf(inf.q_plus));
  EXPECT_EQ(inf.p_value, 0.0);

  const auto skip = gs_test(v, {ZeroSe::skip, WeightBasis::usable});
  EXPECT_NEAR(skip.q_plus, 1.0, 1e-12);
  EXPECT_EQ(skip.skipped.size(), 1u);

  const auto corr = gs_test(v, {ZeroSe::correct, WeightBasis::usable});
  const double se = std::sqrt((3.5 / 4) * (0.5 / 4) / 4 + (0.5 / 5) * (4.5 / 5) / 5);
  EXPECT_NEAR(corr.q_plus, 1.0 + 1.0 / (se * se), 1e-9);
  EXPECT_EQ(corr.corrected.size(), 1u);
}

TEST(GsTest, WeightBasisCountsDroppedStrata) {
  StratumDelta dropped;
  dropped.key = {"x"};
  const std::vector<StratumDelta> v{synthetic(0.2, 0.1), dropped};
  EXPECT_EQ(gs_test(v, {ZeroSe::correct, WeightBasis::usable}).k_weights, 1);
  const auto g = gs_test(v, {ZeroSe::correct, WeightBasis::all});
  EXPECT_EQ(g.k_weights, 2);
  EXPECT_NEAR(g.p_value, chi_bar_squared_upper_tail(4.0, 2), 1e-12);
}

TEST(GsTest, NullCalibrationDominatesUniform) {
  // K = 3 strata at Delta = 0, 150 per arm: Pr(p <= t) <= t + 3 se
  // u01 = 0.5 + 0.5 = 1
  const sim::MarginsSpec null_spec{{0.2, 0.5, 0.1, 0.2}, {0.5, 0.2, 0.1, 0.2}, 0.5};
  const std::vector<sim::DgpSpec> specs(3, null_spec);
  const int reps = 10000;
  std::vector<double> p(reps);
  for (int r = 0; r < reps; ++r) {
    const auto s = sim::sample_stratified(specs, 150, sim::derive_seed(4242, r));
    p[r] = gs_test(stratum_deltas(s, 0, 1)).p_value;
  }
  for (double t : {0.01, 0.025, 0.05, 0.1, 0.25, 0.5}) {
    const double rate = std::count_if(p.begin(), p.end(), [&](double x) { return x <= t; }) / double(reps);
    EXPECT_LE(rate, t + 3 * std::sqrt(t * (1 - t) / reps)) << "t = " << t;
  }
}
