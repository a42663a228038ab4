// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "guidebench/classifier.hpp"
#include "guidebench/simulation.hpp"
#include "support.hpp"

using namespace gbtest;

namespace {

RolloutSet repeat(const std::string& model, const std::string& pid, const GuidelinePath& p, std::size_t k = 10) {
  return make_set(model, pid, std::vector<GuidelinePath>(k, p));
}

struct Toy {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Toy separable_1d(std::size_t n) {
  Toy t{Eigen::MatrixXd(static_cast<Eigen::Index>(n), 2), {}};
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    t.x(r, 0) = static_cast<double>(i);
    t.x(r, 1) = 0.5 * static_cast<double>(i % 3);
    t.y.push_back(i >= n / 2);
  }
  return t;
}

}  // namespace

TEST(FeatureSets, Columns) {
  EXPECT_EQ(feature_columns(FeatureSet::base), (std::vector<std::string>{"self_path_overlap", "self_treatment_match"}));
  EXPECT_EQ(feature_indices(FeatureSet::base_aggregated), (std::vector<std::size_t>{0, 1, 8, 9}));
  EXPECT_EQ(feature_indices(FeatureSet::aggregated_only), (std::vector<std::size_t>{8, 9}));
  EXPECT_EQ(feature_indices(FeatureSet::all).size(), 10u);
  EXPECT_EQ(feature_indices(FeatureSet::internal).size(), 8u);
  EXPECT_EQ(feature_set_from_string("base+agg"), FeatureSet::base_aggregated);
  EXPECT_THROW(feature_set_from_string("Everything"), std::invalid_argument);
}

TEST(Features, CrossAgreementSelfInclusive) {
  const auto p1 = P("TGL-1-1 → TGL-1-2 → TGL-2-2");
  const auto p2 = P("TGL-1-1 → TGL-1-3 → TGL-3-4");
  const auto p3 = P("TGL-1-1 → TGL-1-3 → TGL-3-1 → TGL-3-2 → TGL-3-3");
  const std::vector<RolloutSet> sets = {repeat("m1", "P0001", p1), repeat("m2", "P0001", p1),
                                        repeat("m3", "P0001", p2), repeat("m4", "P0001", p3)};
  const std::vector<PatientCase> cases = {{"P0001", "note", p1, std::nullopt}};
  const auto t = extract_features(sets, cases, {}, FeatureSet::base_aggregated);
  ASSERT_EQ(t.rows.size(), 4u);
  EXPECT_EQ(t.rows[0].values[8], 0.5);
  EXPECT_EQ(t.rows[1].values[8], 0.5);
  EXPECT_EQ(t.rows[2].values[8], 0.25);
  EXPECT_EQ(t.rows[3].values[8], 0.25);
  EXPECT_EQ(*t.rows[0].label, 1);
  EXPECT_EQ(*t.rows[2].label, 0);
  EXPECT_TRUE(std::isnan(t.rows[0].values[2]));
  EXPECT_EQ(t.matrix().cols(), 4);
}

TEST(Features, BenchColumnsNeedScores) {
  const auto p = P("TGL-1-1 → TGL-1-2 → TGL-2-2");
  const std::vector<RolloutSet> sets = {repeat("m1", "P0001", p)};
  const std::vector<PatientCase> cases = {{"P0001", "note", p, std::nullopt}};
  EXPECT_THROW(extract_features(sets, cases, {}, FeatureSet::all), std::invalid_argument);
  BenchScores bench;
  for (auto m : {ProxyMethod::self_overlap, ProxyMethod::self_treatment, ProxyMethod::cross_overlap,
                 ProxyMethod::cross_treatment, ProxyMethod::synth_structured, ProxyMethod::synth_unstructured})
    bench["m1"][m] = 0.5;
  const auto t = extract_features(sets, cases, bench, FeatureSet::all);
  EXPECT_EQ(t.rows[0].values[2], 0.5);
}

TEST(Features, CsvRoundTrip) {
  const auto spec = SimCohortSpec{20, {{"a", 0.6, 0.5, 2}, {"b", 0.4, 0.5, 2}}, 3, 10};
  const auto cohort = simulate_cohort(spec, toy_graph(), prompts());
  const auto t = extract_features(cohort.rollouts, cohort.cases, {}, FeatureSet::base_aggregated);
  TempDir dir("features");
  write_feature_csv(dir / "f.csv", t);
  const auto back = load_feature_csv(dir / "f.csv");
  EXPECT_EQ(back.feature_set, FeatureSet::base_aggregated);
  ASSERT_EQ(back.rows.size(), t.rows.size());
  EXPECT_EQ(back.matrix(), t.matrix());
  EXPECT_EQ(back.labels(), t.labels());
}

TEST(Split, RatioDeterminismAndHygiene) {
  FeatureTable t;
  for (int p = 0; p < 10; ++p) t.rows.push_back({"m", "P" + std::to_string(p), {}, 0});
  const auto s = stratified_split(t, 0.7, 5);
  EXPECT_EQ(s.train_patients.size(), 7u);
  EXPECT_EQ(s.test_patients.size(), 3u);
  const auto again = stratified_split(t, 0.7, 5);
  EXPECT_EQ(s.train_patients, again.train_patients);
  for (Seed seed = 0; seed < 100; ++seed) {
    const auto sp = stratified_split(t, 0.7, seed);
    for (const auto& id : sp.test_patients)
      EXPECT_EQ(std::count(sp.train_patients.begin(), sp.train_patients.end(), id), 0);
  }
  EXPECT_THROW(stratified_split(t, 1.0, 0), std::invalid_argument);
}

TEST(Train, OrderedFeatureGetsPositiveWeight) {
  const auto t = separable_1d(40);
  const auto clf = train(t.x, t.y, FeatureSet::base);
  EXPECT_GT(clf.weights[0], 0.0);
  EXPECT_EQ(evaluate(clf, t.x, t.y).auroc, 1.0);
  EXPECT_LE(clf.gradient_norm, 1e-6);
}

TEST(Train, ConstantColumnFlagged) {
  auto t = separable_1d(40);
  t.x.col(1).setConstant(3.0);
  const auto clf = train(t.x, t.y, FeatureSet::base);
  EXPECT_TRUE(clf.constant[1]);
  EXPECT_EQ(clf.weights[1], 0.0);
  EXPECT_FALSE(clf.constant[0]);
}

TEST(Train, RowAtMeanGivesSigmoidBias) {
  const auto t = separable_1d(30);
  const auto clf = train(t.x, t.y, FeatureSet::base);
  const Eigen::MatrixXd at_mean = clf.mean.transpose();
  EXPECT_NEAR(predict_proba(clf, at_mean)[0], 1.0 / (1.0 + std::exp(-clf.bias)), 1e-12);
}

TEST(Train, MonotoneInPositiveFeature) {
  const auto t = separable_1d(30);
  const auto clf = train(t.x, t.y, FeatureSet::base);
  Eigen::MatrixXd sweep(50, 2);
  for (int i = 0; i < 50; ++i) sweep.row(i) << i - 10.0, 0.5;
  const auto p = predict_proba(clf, sweep);
  for (int i = 1; i < 50; ++i) EXPECT_GE(p[i], p[i - 1]);
}

TEST(Train, AffineRescalingKeepsRanking) {
  Rng rng(31);
  Eigen::MatrixXd x(80, 2);
  std::vector<int> y(80);
  for (int i = 0; i < 80; ++i) {
    y[static_cast<std::size_t>(i)] = static_cast<int>(rng.index(2));
    x(i, 0) = rng.normal() + y[static_cast<std::size_t>(i)];
    x(i, 1) = rng.normal();
  }
  const auto p = predict_proba(train(x, y, FeatureSet::base), x);
  Eigen::MatrixXd scaled = x;
  scaled.col(0) = scaled.col(0) * 250.0 + Eigen::VectorXd::Constant(80, -7.0);
  scaled.col(1) = scaled.col(1) * 0.01 + Eigen::VectorXd::Constant(80, 3.0);
  const auto q = predict_proba(train(scaled, y, FeatureSet::base), scaled);
  for (int i = 0; i < 80; ++i)
    for (int j = 0; j < 80; ++j)
      if (std::abs(p[i] - p[j]) > 1e-9) EXPECT_EQ(p[i] < p[j], q[i] < q[j]);
}

TEST(Train, JsonRoundTrip) {
  const auto t = separable_1d(20);
  const auto clf = train(t.x, t.y, FeatureSet::base, {0.5, 100, 1e-8, 9});
  const auto back = TrainedClassifier::from_json(clf.to_json());
  EXPECT_EQ(predict_proba(back, t.x), predict_proba(clf, t.x));
  EXPECT_EQ(back.C, 0.5);
}

TEST(Train, InputErrors) {
  const auto t = separable_1d(20);
  EXPECT_THROW(train(t.x, std::vector<int>(20, 1), FeatureSet::base), std::invalid_argument);
  EXPECT_THROW(train(t.x, t.y, FeatureSet::all), std::invalid_argument);
  EXPECT_THROW(train(t.x, t.y, FeatureSet::base, {-1.0, 10, 1e-6, 0}), std::invalid_argument);
}
