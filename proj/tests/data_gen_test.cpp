#include "clusterlearn/data_gen.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace clusterlearn;

namespace {

double chi_square(const std::vector<std::uint32_t>& codes, std::size_t p) {
  std::vector<double> count(p, 0.0);
  for (auto c : codes) count[c] += 1;
  const double expect = static_cast<double>(codes.size()) / static_cast<double>(p);
  double s = 0;
  for (double c : count) s += (c - expect) * (c - expect) / expect;
  return s;
}

}  // namespace

TEST(NormalCdf, KnownValues) {
  EXPECT_DOUBLE_EQ(normal_cdf(0.0), 0.5);
  EXPECT_NEAR(normal_cdf(1.959963984540054), 0.975, 1e-15);
  EXPECT_NEAR(normal_cdf(-1.0), 0.15865525393145707, 1e-15);
  EXPECT_NEAR(normal_cdf(-8.0), 6.22096057427178e-16, 1e-28);
}

TEST(GenCategorical, TwoLevelFrequencies) {
  auto codes = gen_categorical(100000, {2, 2, 2}, 0.0, 1);
  for (const auto& c : codes) {
    double ones = 0;
    for (auto v : c) ones += v;
    EXPECT_NEAR(ones / 1e5, 0.5, 0.01);
  }
}

TEST(GenCategorical, MarginalUniformity) {
  // 0.999 quantiles of chi-square with 1, 4 and 19 degrees of freedom
  const std::vector<std::size_t> levels{2, 5, 20};
  const double crit[] = {10.828, 18.467, 43.820};
  auto codes = gen_categorical(100000, levels, 0.0, 2);
  for (std::size_t j = 0; j < levels.size(); ++j) EXPECT_LT(chi_square(codes[j], levels[j]), crit[j]);
}

TEST(GenCategorical, LatentCorrelation) {
  for (double rho : {0.0, 0.2, 0.7}) {
    auto z = gen_latents(100000, 3, rho, 3);
    Eigen::MatrixXd c = z.rowwise() - z.colwise().mean();
    Eigen::MatrixXd cov = c.transpose() * c / static_cast<double>(z.rows() - 1);
    for (int a = 0; a < 3; ++a)
      for (int b = a + 1; b < 3; ++b) EXPECT_NEAR(cov(a, b) / std::sqrt(cov(a, a) * cov(b, b)), rho, 0.02);
  }
}

// Two binary predictors agree exactly when both latents share a sign:
// P = 1 - arccos(rho) / pi.
TEST(GenCategorical, NearComonotoneAgreement) {
  for (double rho : {0.9, 0.999}) {
    auto codes = gen_categorical(100000, {2, 2}, rho, 4);
    double same = 0;
    for (std::size_t i = 0; i < codes[0].size(); ++i) same += codes[0][i] == codes[1][i];
    EXPECT_NEAR(same / 1e5, 1.0 - std::acos(rho) / M_PI, 0.003) << rho;
  }
}

TEST(GenCategorical, Determinism) {
  auto a = gen_categorical(500, {3, 4}, 0.2, 5);
  auto b = gen_categorical(500, {3, 4}, 0.2, 5);
  auto c = gen_categorical(500, {3, 4}, 0.2, 6);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(GenCategorical, RejectsBadRho) {
  EXPECT_THROW(gen_categorical(10, {2}, 1.0, 1), std::invalid_argument);
  EXPECT_THROW(gen_categorical(10, {2}, -0.1, 1), std::invalid_argument);
}

TEST(LevelRelabeling, SharedPerLevelCount) {
  auto r = LevelRelabeling::random({4, 4, 7}, 9);
  ASSERT_EQ(r.perm.size(), 2u);
  std::set<std::uint32_t> seen(r.perm.at(7).begin(), r.perm.at(7).end());
  EXPECT_EQ(seen.size(), 7u);
  // comonotone latents: predictors with the same level count get the same relabelled code
  auto shared = gen_categorical(5000, {4, 4}, 0.999, 10, r);
  auto plain = gen_categorical(5000, {4, 4}, 0.999, 10);
  for (std::size_t i = 0; i < 5000; ++i) {
    EXPECT_EQ(shared[0][i], r.apply(4, plain[0][i]));
    EXPECT_EQ(shared[1][i], r.apply(4, plain[1][i]));
  }
  EXPECT_EQ(LevelRelabeling::identity().apply(4, 3), 3u);
}

TEST(GenResponse, NoNoise) {
  Eigen::VectorXd s(3);
  s << 1, -2, 0.5;
  auto r = gen_response(s, 0.0, 1);
  EXPECT_EQ(r.y, s);
  EXPECT_TRUE(std::isinf(r.snr));
}

TEST(GenResponse, ZeroSignal) {
  auto r = gen_response(Eigen::VectorXd::Zero(50), 1.0, 2);
  EXPECT_EQ(r.snr, 0.0);
  EXPECT_GT(r.y.squaredNorm(), 0.0);
}

TEST(GenResponse, NoiseScale) {
  auto r = gen_response(Eigen::VectorXd::Zero(100000), 2.0, 3);
  EXPECT_NEAR(r.y.squaredNorm() / 1e5, 4.0, 0.1);
  EXPECT_THROW(gen_response(Eigen::VectorXd::Zero(3), -1.0, 1), std::invalid_argument);
}

TEST(MakeBetaStar, BandsSmall) {
  BetaStarSetting s{BetaPattern::bands, 1, 1, 2, 1};
  auto c = make_beta_star(s);
  EXPECT_EQ(c.categorical[0], (std::vector<double>{-2, 0, 2}));
  EXPECT_EQ(c.categorical[1], (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(c.alpha, 0.0);
}

TEST(MakeBetaStar, FixedPatterns) {
  auto pair = make_beta_star({BetaPattern::pair, 4, 12, 3, 2});
  auto ladder = make_beta_star({BetaPattern::ladder, 4, 12, 3, 2});
  EXPECT_EQ(pair.categorical[1], (std::vector<double>{-2, -2, 0, 0, 0}));
  EXPECT_EQ(ladder.categorical[0], (std::vector<double>{1, 2, 3, 0, 0}));
  EXPECT_EQ(ladder.categorical[2], (std::vector<double>(5, 0.0)));
  EXPECT_THROW(make_beta_star({BetaPattern::bands, 1, 1, 2, 3}), std::invalid_argument);
}

TEST(Generate, SplitSizesAndSignal) {
  auto cfg = SynthConfig::from_setting({BetaPattern::bands, 2, 4, 5, 2}, 80, 1.0, 7);
  cfg.n_test = 30;
  auto d = generate(cfg);
  ASSERT_EQ(d.splits.size(), 3u);
  EXPECT_EQ(d.train().data.n(), 80u);
  EXPECT_EQ(d.val().data.n(), 80u);
  EXPECT_EQ(d.test().data.n(), 30u);
  for (const auto& s : d.splits) {
    EXPECT_LT((s.signal - predict(s.data, cfg.beta_star)).norm(), 1e-12);
    EXPECT_GT(s.snr, 0.0);
  }
}

TEST(Generate, Reproducible) {
  auto cfg = SynthConfig::from_setting({BetaPattern::ladder, 4, 12, 4, 2}, 50, 1.0, 11);
  auto a = generate(cfg), b = generate(cfg);
  for (std::size_t s = 0; s < 3; ++s) {
    EXPECT_EQ(a.splits[s].data.all_codes(), b.splits[s].data.all_codes());
    EXPECT_EQ(a.splits[s].data.y(), b.splits[s].data.y());
  }
  cfg.seed = 12;
  EXPECT_NE(generate(cfg).train().data.y(), a.train().data.y());
}

TEST(Generate, SplitsAreIndependentDraws) {
  auto cfg = SynthConfig::from_setting({BetaPattern::pair, 4, 12, 3, 1}, 40, 1.0, 13);
  auto d = generate(cfg);
  EXPECT_NE(d.train().data.all_codes(), d.val().data.all_codes());
}

TEST(Generate, ValidatesConfig) {
  auto cfg = SynthConfig::from_setting({BetaPattern::pair, 4, 12, 3, 1}, 40, 1.0, 13);
  cfg.levels.push_back(5);
  EXPECT_THROW(generate(cfg), DataError);
  cfg = SynthConfig::from_setting({BetaPattern::pair, 4, 12, 3, 1}, 40, 1.0, 13);
  cfg.sigma = -1;
  EXPECT_THROW(generate(cfg), std::invalid_argument);
}
