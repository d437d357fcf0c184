#include "clusterlearn/model.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace clusterlearn;
using testutil::dataset_1based;
using testutil::schema_for;

TEST(Schema, OffsetsAreContiguous) {
  auto s = schema_for({3, 1, 4}, 2);
  EXPECT_EQ(s.offset(0), 0u);
  EXPECT_EQ(s.offset(1), 3u);
  EXPECT_EQ(s.offset(2), 4u);
  EXPECT_EQ(s.categorical_width(), 8u);
  EXPECT_EQ(s.width(), 10u);
  EXPECT_EQ(s.level_index(2, "L3"), 2u);
  EXPECT_FALSE(s.level_index(1, "L2"));
  EXPECT_EQ(s.predictor_index("C2"), 1u);
}

TEST(Schema, RejectsDuplicateAndEmptyLevels) {
  using Preds = std::vector<CategoricalPredictor>;
  EXPECT_THROW(CategoricalSchema(Preds{{"a", {"x", "x"}}}), DataError);
  EXPECT_THROW(CategoricalSchema(Preds{{"a", {}}}), DataError);
}

TEST(Dataset, ValidatesCodesAndLabels) {
  EXPECT_THROW(dataset_1based({2}, {{1}, {3}}, {0.0, 1.0}), DataError);
  EXPECT_THROW(dataset_1based({2}, {{1}, {2}}, {0.0, 1.0}, Task::binary), DataError);
  EXPECT_NO_THROW(dataset_1based({2}, {{1}, {2}}, {-1.0, 1.0}, Task::binary));
  EXPECT_THROW(dataset_1based({2}, {{1}}, {0.0, 1.0}), DataError);
}

TEST(Dataset, LevelIndexSets) {
  auto ds = dataset_1based({3}, {{1}, {1}, {2}, {3}}, {0, 0, 0, 0});
  EXPECT_EQ(ds.level_rows(0, 0), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(ds.level_rows(0, 1), (std::vector<std::size_t>{2}));
  EXPECT_EQ(ds.level_rows(0, 2), (std::vector<std::size_t>{3}));
}

TEST(ExpandDesign, DummyCoding) {
  auto one = expand_design(dataset_1based({2}, {{1}, {2}}, {0, 0})).dense();
  EXPECT_EQ(one, (Eigen::MatrixXd(2, 2) << 1, 0, 0, 1).finished());
  auto two = expand_design(dataset_1based({2, 2}, {{2, 1}}, {0})).dense();
  EXPECT_EQ(two, (Eigen::MatrixXd(1, 4) << 0, 1, 1, 0).finished());
}

TEST(ExpandDesign, EveryRowHasOneIndicatorPerPredictor) {
  std::mt19937_64 rng(1);
  auto ds = testutil::random_dataset(rng, 40, {3, 5, 2}, 2);
  auto x = expand_design(ds).dense();
  const auto& s = ds.schema();
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < 3; ++j)
      EXPECT_EQ(x.row(i).segment(static_cast<Eigen::Index>(s.offset(j)), static_cast<Eigen::Index>(s.levels(j))).sum(), 1.0);
  EXPECT_EQ(x.rightCols(2), ds.continuous());
}

TEST(Objective, InterceptOnlyBaseline) {
  auto ds = dataset_1based({2, 3}, {{1, 1}, {2, 3}, {1, 2}}, {1.0, 2.0, 6.0});
  auto c = Coefficients::zeros(ds.schema());
  c.alpha = 3.0;
  EXPECT_DOUBLE_EQ(objective(ds, c, {1.0, 1.0}), (4.0 + 1.0 + 9.0) / 3.0 + 2.0);
}

TEST(Objective, ExactFitAndPenalisedValue) {
  auto ds = dataset_1based({2}, {{1}, {1}, {2}, {2}}, {1, 1, -1, -1});
  Coefficients c{0.0, {{1.0, -1.0}}, {}};
  EXPECT_DOUBLE_EQ(objective(ds, c, {0.0, 0.0}), 0.0);
  EXPECT_DOUBLE_EQ(objective(ds, c, {0.25, 0.5}), 1.5);
}

TEST(Objective, LogisticNeedsBinaryTask) {
  auto ds = dataset_1based({2}, {{1}, {2}}, {1, -1});
  EXPECT_THROW(objective(ds, Coefficients::zeros(ds.schema()), {}, Loss::logistic), DataError);
  auto bin = dataset_1based({2}, {{1}, {2}}, {1, -1}, Task::binary);
  EXPECT_NEAR(objective(bin, Coefficients::zeros(bin.schema()), {}, Loss::logistic), std::log(2.0), 1e-15);
}

TEST(Objective, DimensionMismatchThrows) {
  auto ds = dataset_1based({2}, {{1}, {2}}, {1, -1});
  Coefficients c{0.0, {{1.0, 2.0, 3.0}}, {}};
  EXPECT_THROW(objective(ds, c, {}), DataError);
  EXPECT_THROW(objective(ds, Coefficients::zeros(ds.schema()), {-1.0, 0.0}), std::invalid_argument);
}

TEST(LogisticLoss, StableForLargeMargins) {
  EXPECT_NEAR(logistic_loss(800.0), 0.0, 1e-300);
  EXPECT_DOUBLE_EQ(logistic_loss(-800.0), 800.0);
  EXPECT_NEAR(logistic_loss(0.0), std::log(2.0), 1e-16);
}

TEST(Clustering, SmallHandWorkedPatterns) {
  Coefficients a{0.0, {{2, 2, 0, 0, 0}}, {}};
  auto g = clustering_of(a);
  ASSERT_EQ(g.predictors[0].size(), 2u);
  EXPECT_EQ(g.predictors[0][0].levels, (std::vector<std::size_t>{0, 1}));
  EXPECT_FALSE(g.predictors[0][0].zero);
  EXPECT_EQ(g.predictors[0][1].levels, (std::vector<std::size_t>{2, 3, 4}));
  EXPECT_TRUE(g.predictors[0][1].zero);

  EXPECT_EQ(clustering_of(Coefficients{0.0, {{1, 2, 3}}, {}}).total_clusters(), 3u);
  EXPECT_EQ(clustering_of(Coefficients{0.0, {{0, 0}, {0, 0}}, {}}).total_clusters(), 2u);
}

TEST(Clustering, RandomPatternsAreValidAndMatchFusionCount) {
  std::mt19937_64 rng(5);
  auto s = schema_for({4, 7, 1, 3});
  for (int t = 0; t < 200; ++t) {
    auto c = testutil::random_coefficients(rng, s);
    auto g = clustering_of(c);
    ASSERT_TRUE(g.valid_for(s));
    EXPECT_EQ(g.total_clusters(), fusion_count(c));
    for (std::size_t j = 0; j < g.predictors.size(); ++j) {
      std::vector<double> values;
      for (const auto& cl : g.predictors[j]) {
        const double v = c.categorical[j][cl.levels.front()];
        for (auto k : cl.levels) EXPECT_EQ(c.categorical[j][k], v);
        EXPECT_EQ(cl.zero, v == 0.0);
        values.push_back(v);
      }
      std::sort(values.begin(), values.end());
      EXPECT_EQ(std::adjacent_find(values.begin(), values.end()), values.end());
    }
  }
}

TEST(Coefficients, ExpandedRoundTrip) {
  std::mt19937_64 rng(9);
  auto s = schema_for({3, 2}, 2);
  for (int t = 0; t < 20; ++t) {
    auto c = testutil::random_coefficients(rng, s);
    EXPECT_EQ(Coefficients::from_expanded(s, c.expanded(), c.alpha), c);
  }
  EXPECT_THROW(Coefficients::from_expanded(s, Eigen::VectorXd::Zero(3)), DataError);
}

TEST(Baseline, LargestClusterZero) {
  auto c = canonicalize_baseline(Coefficients{0.0, {{3, 3, 1}}, {}}, Baseline::largest_cluster());
  EXPECT_EQ(c.categorical[0], (std::vector<double>{0, 0, -2}));
  EXPECT_EQ(c.alpha, 3.0);

  Coefficients already{1.0, {{0, 0, 5}}, {}};
  EXPECT_EQ(canonicalize_baseline(already, Baseline::largest_cluster()), already);
}

TEST(Baseline, UserLevel) {
  auto c = canonicalize_baseline(Coefficients{0.0, {{2, 4}}, {}}, Baseline::user({1}));
  EXPECT_EQ(c.categorical[0], (std::vector<double>{-2, 0}));
  EXPECT_EQ(c.alpha, 4.0);
  EXPECT_THROW(canonicalize_baseline(Coefficients{0.0, {{2, 4}}, {}}, Baseline::user({2})), DataError);
}

TEST(Baseline, TieGoesToClusterWithSmallestLevel) {
  auto c = canonicalize_baseline(Coefficients{0.0, {{5, 7, 7, 5}}, {}}, Baseline::largest_cluster());
  EXPECT_EQ(c.categorical[0], (std::vector<double>{0, 2, 2, 0}));
  EXPECT_EQ(c.alpha, 5.0);
}

TEST(Baseline, PredictionsUnchangedAndObjectiveNotWorse) {
  std::mt19937_64 rng(13);
  auto ds = testutil::random_dataset(rng, 30, {4, 3});
  for (int t = 0; t < 100; ++t) {
    auto c = testutil::random_coefficients(rng, ds.schema());
    auto b = canonicalize_baseline(c, Baseline::largest_cluster());
    EXPECT_LT((predict(ds, b) - predict(ds, c)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(fusion_count(b), fusion_count(c));
    EXPECT_NEAR(objective(ds, b, {0.0, 0.3}), objective(ds, c, {0.0, 0.3}), 1e-12);
    EXPECT_LE(objective(ds, b, {0.2, 0.3}), objective(ds, c, {0.2, 0.3}) + 1e-12);
  }
}

TEST(Standardizer, RoundTripKeepsPredictions) {
  std::mt19937_64 rng(17);
  auto ds = testutil::random_dataset(rng, 25, {3}, 2);
  auto shifted = ds.continuous();
  shifted.col(0).array() = shifted.col(0).array() * 4.0 + 10.0;
  shifted.col(1).setConstant(2.0);
  auto raw = ds.with_continuous(shifted);
  auto st = Standardizer::fit(raw);
  EXPECT_EQ(st.scale[1], 1.0);
  auto c = testutil::random_coefficients(rng, raw.schema());
  auto z = st.to_standardized(c);
  EXPECT_LT((predict(st.apply(raw), z) - predict(raw, c)).cwiseAbs().maxCoeff(), 1e-10);
  auto back = st.to_original(z);
  EXPECT_NEAR(back.alpha, c.alpha, 1e-12);
}

TEST(AlignCoefficients, UnseenLevelsGetZero) {
  CategoricalSchema from(std::vector<CategoricalPredictor>{{"city", {"a", "b"}}});
  CategoricalSchema to(std::vector<CategoricalPredictor>{{"city", {"b", "c", "a"}}});
  Coefficients c{1.0, {{2.0, 3.0}}, {}};
  auto out = align_coefficients(c, from, to);
  EXPECT_EQ(out.categorical[0], (std::vector<double>{3.0, 0.0, 2.0}));
  EXPECT_EQ(out.alpha, 1.0);
}
