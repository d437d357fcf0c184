#include "clusterlearn/dp_segment.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace clusterlearn;

namespace {

WeightedSequence make_seq(std::vector<double> y, std::vector<double> w) {
  return WeightedSequence{std::move(y), std::move(w)};
}

WeightedSequence random_sorted(std::mt19937_64& rng, std::size_t m) {
  std::uniform_real_distribution<double> val(-3.0, 3.0), wt(1.0, 5.0);
  std::bernoulli_distribution dup(0.15);
  WeightedSequence s;
  for (std::size_t i = 0; i < m; ++i) {
    s.ybar.push_back(i > 0 && dup(rng) ? s.ybar.back() : val(rng));
    s.weights.push_back(wt(rng));
  }
  std::sort(s.ybar.begin(), s.ybar.end(), std::greater<>());
  return s;
}

}  // namespace

TEST(FmaxOverF, VertexOfSingleQuadratic) {
  auto f = PiecewiseValueFn::quadratic(-1.0, 4.0, -4.0);  // -(x-2)^2
  auto m = fmax_over_F(f);
  EXPECT_DOUBLE_EQ(m.x, 2.0);
  EXPECT_DOUBLE_EQ(m.value, 0.0);
}

TEST(FmaxOverF, SpikeBeatsSmoothMaximum) {
  auto f = PiecewiseValueFn::from_parts({{PiecewiseValueFn::kInf, -1.0, 0.0, 0.0}}, {{0.0, 1.0}});
  auto m = fmax_over_F(f);
  EXPECT_EQ(m.x, 0.0);
  EXPECT_DOUBLE_EQ(m.value, 1.0);
}

TEST(FmaxOverF, SmoothMaximumBeatsDistantSpike) {
  // -(x-3)^2 with a unit spike at the origin: spike value -9 + 1
  auto f = PiecewiseValueFn::from_parts({{PiecewiseValueFn::kInf, -1.0, 6.0, -9.0}}, {{0.0, 1.0}});
  auto m = fmax_over_F(f);
  EXPECT_DOUBLE_EQ(m.x, 3.0);
  EXPECT_DOUBLE_EQ(m.value, 0.0);
  EXPECT_DOUBLE_EQ(f(0.0), -8.0);
}

TEST(FmaxOverF, ExactTiePrefersZero) {
  // -(x-2)^2/2 + spike 2 at 0: smooth max 0 at x=2, spike value -2 + 2 = 0
  auto f = PiecewiseValueFn::from_parts({{PiecewiseValueFn::kInf, -0.5, 2.0, -2.0}}, {{0.0, 2.0}});
  EXPECT_EQ(fmax_over_F(f).x, 0.0);
}

TEST(FmaxOverF, UnboundedQuadraticIsRejected) {
  EXPECT_THROW(fmax_over_F(PiecewiseValueFn::quadratic(1.0, 0.0, 0.0)), SolverError);
  EXPECT_THROW(fmax_over_F(PiecewiseValueFn::quadratic(0.0, 1.0, 0.0)), SolverError);
}

TEST(ClipWithJumpPenalty, PlateauOutsideUnitInterval) {
  auto f = clip_with_jump_penalty(PiecewiseValueFn::quadratic(-1.0, 0.0, 0.0), 1.0);
  ASSERT_TRUE(f.well_formed());
  ASSERT_EQ(f.pieces().size(), 3u);
  EXPECT_DOUBLE_EQ(f.pieces()[0].upper, -1.0);
  EXPECT_DOUBLE_EQ(f.pieces()[1].upper, 1.0);
  EXPECT_DOUBLE_EQ(f(-5.0), -1.0);
  EXPECT_DOUBLE_EQ(f(5.0), -1.0);
  EXPECT_DOUBLE_EQ(f(0.5), -0.25);
  EXPECT_DOUBLE_EQ(f(0.0), 0.0);
}

TEST(ClipWithJumpPenalty, ZeroPenaltyGivesConstantMaximum) {
  auto f = clip_with_jump_penalty(PiecewiseValueFn::quadratic(-2.0, 4.0, 1.0), 0.0);
  ASSERT_EQ(f.pieces().size(), 1u);
  EXPECT_DOUBLE_EQ(f(-10.0), 3.0);
  EXPECT_DOUBLE_EQ(f(1.0), 3.0);
  EXPECT_TRUE(f.spikes().empty());
}

TEST(ClipWithJumpPenalty, SpikeKeepsSurplusAbovePlateau) {
  auto delta = PiecewiseValueFn::from_parts({{PiecewiseValueFn::kInf, -1.0, 0.0, 0.0}}, {{0.0, 0.5}});
  auto f = clip_with_jump_penalty(delta, 0.2);
  ASSERT_TRUE(f.well_formed());
  EXPECT_DOUBLE_EQ(f.quadratic_value(0.0), 0.3);
  EXPECT_DOUBLE_EQ(f(0.0), 0.5);
  ASSERT_EQ(f.spikes().size(), 1u);
  EXPECT_NEAR(f.spikes()[0].height, 0.2, 1e-15);
  EXPECT_DOUBLE_EQ(f(1.0), 0.3);
}

TEST(ClipWithJumpPenalty, SpikeBelowPlateauIsDropped) {
  // -(x-3)^2 + spike(0 -> 1): value at 0 is -8, far below plateau -0.5
  auto delta = PiecewiseValueFn::from_parts({{PiecewiseValueFn::kInf, -1.0, 6.0, -9.0}}, {{0.0, 1.0}});
  auto f = clip_with_jump_penalty(delta, 0.5);
  EXPECT_TRUE(f.spikes().empty());
  EXPECT_DOUBLE_EQ(f(0.0), -0.5);
}

TEST(AddPointwise, QuadraticDataTerm) {
  auto f = add_pointwise(PiecewiseValueFn::constant(0.0), {2.0, 1.0, 0.0});
  EXPECT_DOUBLE_EQ(f(1.0), 0.0);
  EXPECT_DOUBLE_EQ(f(3.0), -4.0);
  EXPECT_TRUE(f.spikes().empty());
}

TEST(AddPointwise, BonusBecomesSpikeAtOrigin) {
  auto f = add_pointwise(PiecewiseValueFn::constant(0.0), {2.0, 0.0, 0.7});
  ASSERT_EQ(f.spikes().size(), 1u);
  EXPECT_EQ(f.spikes()[0].x, 0.0);
  EXPECT_DOUBLE_EQ(f(0.0), 0.7);
  EXPECT_DOUBLE_EQ(f(1.0), -1.0);
}

TEST(AddPointwise, SpikesMergeAdditively) {
  auto f = PiecewiseValueFn::from_parts({{PiecewiseValueFn::kInf, 0.0, 0.0, 0.0}}, {{0.0, 0.3}});
  f = add_pointwise(f, {1.0, 0.0, 0.7});
  ASSERT_EQ(f.spikes().size(), 1u);
  EXPECT_NEAR(f.spikes()[0].height, 1.0, 1e-15);
}

TEST(DpSegPenL0, TwoLevelExample) {
  auto s = dp_seg_pen_l0(make_seq({3, 3, 0}, {1, 1, 1}), 0.5, 0.5);
  EXPECT_EQ(s.beta, (std::vector<double>{3, 3, 0}));
  EXPECT_DOUBLE_EQ(s.objective, 1.5);
  EXPECT_EQ(s.jump_count, 1u);
  EXPECT_EQ(s.nonzero_count, 2u);
}

TEST(DpSegPenL0, ZeroPenaltiesInterpolate) {
  auto seq = make_seq({4.5, 2, 1.25, -0.5, -3}, {1, 2, 3, 1, 4});
  auto s = dp_seg_pen_l0(seq, 0.0, 0.0);
  for (std::size_t i = 0; i < seq.size(); ++i) EXPECT_DOUBLE_EQ(s.beta[i], seq.ybar[i]);
  EXPECT_DOUBLE_EQ(s.objective, 0.0);
}

TEST(DpSegPenL0, SingleElementTwoCandidates) {
  // w c^2 / 2 = 2 against lambda0
  EXPECT_EQ(dp_seg_pen_l0(make_seq({2}, {1}), 1.9, 0.0).beta[0], 2.0);
  EXPECT_EQ(dp_seg_pen_l0(make_seq({2}, {1}), 2.1, 0.0).beta[0], 0.0);
  EXPECT_EQ(dp_seg_pen_l0(make_seq({2}, {1}), 2.0, 0.0).beta[0], 0.0);  // tie goes to zero
}

TEST(DpSegPenL0, RejectsNegativePenaltyAndUnsortedInput) {
  EXPECT_THROW(dp_seg_pen_l0(make_seq({1}, {1}), -1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(dp_seg_pen_l0(make_seq({1, 2}, {1, 1}), 0.0, 0.0), std::invalid_argument);
}

TEST(BruteForceUnivariate, HugeJumpPenaltyMergesToMean) {
  auto s = brute_force_univariate(make_seq({1, 1}, {1, 1}), 0.0, 1e6);
  EXPECT_EQ(s.beta, (std::vector<double>{1, 1}));
}

TEST(BruteForceUnivariate, SplitBeatsMerge) {
  // merged cost 25, split cost 1
  auto seq = make_seq({5, -5}, {1, 1});
  auto s = brute_force_univariate(seq, 0.0, 1.0);
  EXPECT_EQ(s.beta, (std::vector<double>{5, -5}));
  EXPECT_DOUBLE_EQ(s.objective, 1.0);
  EXPECT_DOUBLE_EQ(dp_seg_pen_l0(seq, 0.0, 1.0).objective, 1.0);
}

TEST(BruteForceUnivariate, AgreesOnWorkedExamples) {
  auto a = make_seq({3, 3, 0}, {1, 1, 1});
  EXPECT_DOUBLE_EQ(brute_force_univariate(a, 0.5, 0.5).objective, 1.5);
  EXPECT_EQ(brute_force_univariate(make_seq({2}, {1}), 2.0, 0.0).beta[0], 0.0);
}

TEST(BruteForceUnivariate, GuardsLength) {
  WeightedSequence s;
  s.ybar.assign(19, 0.0);
  s.weights.assign(19, 1.0);
  EXPECT_THROW(brute_force_univariate(s, 0.0, 0.0), GuardExceeded);
}

TEST(DpSegPenL0, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<std::size_t> len(1, 12);
  std::uniform_real_distribution<double> pen(0.0, 3.0);
  for (int trial = 0; trial < 400; ++trial) {
    auto seq = random_sorted(rng, len(rng));
    const double l0 = pen(rng), l = pen(rng);
    auto dp = dp_seg_pen_l0(seq, l0, l, {.check_invariants = true});
    auto bf = brute_force_univariate(seq, l0, l);
    ASSERT_NEAR(dp.objective, bf.objective, 1e-9) << "trial " << trial;
    ASSERT_NEAR(dp.objective, segment_objective(seq, dp.beta, l0, l), 1e-12);
  }
}

TEST(DpSegPenL0, SolutionIsMonotoneWithExactSegmentLevels) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> pen(0.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    auto seq = random_sorted(rng, 40);
    const bool unit = trial % 2 == 0;
    if (unit) std::fill(seq.weights.begin(), seq.weights.end(), 1.0);
    auto s = dp_seg_pen_l0(seq, pen(rng), pen(rng));
    if (unit) {
      for (std::size_t i = 1; i < s.beta.size(); ++i) EXPECT_LE(s.beta[i], s.beta[i - 1]);
    }
    for (std::size_t start = 0; start < s.beta.size();) {
      std::size_t end = start;
      double sw = 0, swy = 0;
      while (end < s.beta.size() && s.beta[end] == s.beta[start])
        sw += seq.weights[end], swy += seq.weights[end] * seq.ybar[end], ++end;
      if (s.beta[start] != 0.0) {
        EXPECT_EQ(s.beta[start], swy / sw);
      }
      start = end;
    }
  }
}

TEST(DpSegPenL0, UnequalWeightsCanZeroALaterLevel) {
  // a light level is cheaper to zero than a heavy one, so order is not kept
  auto seq = make_seq({-1.0, -1.1}, {100.0, 1.0});
  auto s = dp_seg_pen_l0(seq, 3.0, 0.0);
  EXPECT_EQ(s.beta, (std::vector<double>{-1.0, 0.0}));
  EXPECT_NEAR(s.objective, brute_force_univariate(seq, 3.0, 0.0).objective, 1e-12);
}

TEST(DpSegPenL0, JointScalingLeavesArgminUnchanged) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto seq = random_sorted(rng, 10);
    const double l0 = 0.7, l = 1.3, c = 3.5;
    auto base = dp_seg_pen_l0(seq, l0, l);
    auto scaled_seq = seq;
    for (auto& w : scaled_seq.weights) w *= c;
    auto scaled = dp_seg_pen_l0(scaled_seq, c * l0, c * l);
    for (std::size_t i = 0; i < seq.size(); ++i) EXPECT_NEAR(scaled.beta[i], base.beta[i], 1e-12);
    EXPECT_NEAR(scaled.objective, c * base.objective, 1e-9);
  }
}

TEST(DpSegPenL0, ZeroInputGivesZeroSolution) {
  auto seq = make_seq(std::vector<double>(8, 0.0), {1, 2, 3, 4, 5, 1, 2, 3});
  for (double l0 : {0.0, 0.5, 2.0})
    for (double l : {0.0, 0.3, 4.0}) {
      auto s = dp_seg_pen_l0(seq, l0, l);
      for (double b : s.beta) EXPECT_EQ(b, 0.0);
      EXPECT_EQ(s.objective, 0.0);
    }
}

TEST(SolveUnivariate, UnsortedInputIsScatteredBack) {
  std::vector<double> values{0.0, 3.0, 3.0};
  std::vector<double> weights{1.0, 1.0, 1.0};
  auto s = solve_univariate(values, weights, 0.5, 0.5);
  EXPECT_EQ(s.beta, (std::vector<double>{0, 3, 3}));
  EXPECT_DOUBLE_EQ(s.objective, 1.5);
}

TEST(DpSegPenL0, LongSequenceStaysWellFormed) {
  std::mt19937_64 rng(3);
  auto seq = random_sorted(rng, 300);
  auto s = dp_seg_pen_l0(seq, 0.4, 0.8, {.check_invariants = true});
  EXPECT_NEAR(s.objective, segment_objective(seq, s.beta, 0.4, 0.8), 1e-9);
}
