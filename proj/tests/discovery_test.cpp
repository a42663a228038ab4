// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "guidebench/discovery.hpp"
#include "guidebench/simulation.hpp"
#include "support.hpp"

using namespace gbtest;

namespace {

Eigen::MatrixXd blobs(Rng& rng, int per, double gap, std::vector<int>* labels = nullptr) {
  Eigen::MatrixXd x(2 * per, 3);
  for (int i = 0; i < 2 * per; ++i) {
    const bool first = i < per;
    if (labels) labels->push_back(first);
    for (int j = 0; j < 3; ++j) x(i, j) = (first ? gap : 0.0) + rng.normal();
  }
  return x;
}

}  // namespace

TEST(KMeans, ObjectiveNeverIncreases) {
  Rng rng(41);
  for (int t = 0; t < 20; ++t) {
    const auto x = blobs(rng, 30, 1.5);
    const auto r = kmeans(x, 2, static_cast<Seed>(t));
    ASSERT_FALSE(r.trace.empty());
    for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i], r.trace[i - 1] + 1e-12);
    EXPECT_NEAR(r.trace.back(), r.objective, 1e-9);
  }
}

TEST(KMeans, DeterministicAndDegenerate) {
  Rng rng(42);
  const auto x = blobs(rng, 20, 4.0);
  const auto a = kmeans(x, 2, 9);
  const auto b = kmeans(x, 2, 9);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_THROW(kmeans(Eigen::MatrixXd::Ones(10, 2), 2, 1), std::invalid_argument);
  EXPECT_THROW(kmeans(x.topRows(3), 2, 1), std::invalid_argument);
}

TEST(KMeans, SeparatesBlobs) {
  Rng rng(43);
  std::vector<int> y;
  const auto x = blobs(rng, 100, 8.0, &y);
  const auto s = kmeans_separate(x, std::span<const int>(y), 1);
  EXPECT_GE(*s.f1, 0.99);
  const auto blind = kmeans_separate(x, std::nullopt, 1);
  EXPECT_FALSE(blind.f1);
  EXPECT_EQ(blind.predicted.size(), 200u);
}

TEST(Confusion, ConsistentModelHasNone) {
  const std::vector<RolloutSet> sets = {make_set("m", "p", std::vector<GuidelinePath>(10, P("A-1-1 → A-1-2")))};
  EXPECT_TRUE(mine_confusion_points(sets).empty());
}

TEST(Confusion, DivergenceNodes) {
  std::vector<GuidelinePath> paths(9, P("A-1-1 → A-1-2 → A-1-3"));
  paths.push_back(P("A-1-1 → A-1-2 → A-1-4"));
  const std::vector<RolloutSet> sets = {make_set("m", "p", paths)};
  const auto r = mine_confusion_points(sets);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].key, "A-1-3");
  EXPECT_EQ(r[1].key, "A-1-4");
  EXPECT_EQ(r[0].divergence_count, 1u);
  EXPECT_EQ(r[1].divergence_count, 1u);
}

// Hand-tabulated three-patient fixture.
TEST(Confusion, FixtureRanking) {
  const auto a = P("A-1-1 → A-1-2 → A-2-1");
  const auto b = P("A-1-1 → A-1-3 → A-2-1");
  const auto c = P("A-1-1 → A-1-2 → A-2-2");
  const std::vector<RolloutSet> sets = {
      make_set("m", "p1", {a, a, b}),  // A-1-2, A-1-3 diverge
      make_set("m", "p2", {a, c, c}),  // A-2-1, A-2-2 diverge
      make_set("m", "p3", {b, c}),     // A-1-2, A-1-3, A-2-1, A-2-2 diverge
  };
  const auto r = mine_confusion_points(sets);
  std::map<std::string, std::size_t> got;
  for (const auto& p : r) got[p.key] = p.divergence_count;
  EXPECT_EQ(got, (std::map<std::string, std::size_t>{{"A-1-2", 2}, {"A-1-3", 2}, {"A-2-1", 2}, {"A-2-2", 2}}));
  // Every path above touches pages A-1 and A-2, so nothing diverges per page.
  EXPECT_TRUE(mine_confusion_points(sets, true).empty());
  const std::vector<RolloutSet> crossing = {make_set("m", "p4", {a, P("A-1-1 → B-1-1")})};
  std::map<std::string, std::size_t> pages;
  for (const auto& p : mine_confusion_points(crossing, true)) pages[p.key] = p.divergence_count;
  EXPECT_EQ(pages, (std::map<std::string, std::size_t>{{"A-2", 1}, {"B-1", 1}}));
}

TEST(Confusion, PermutationInvariant) {
  SimCohortSpec spec{30, {{"m", 0.5, 0.8, 3}}, 2, 10};
  auto cohort = simulate_cohort(spec, toy_graph(), prompts());
  const auto ref = confusion_report(mine_confusion_points(cohort.rollouts));
  Rng rng(5);
  for (auto& s : cohort.rollouts)
    for (std::size_t i = s.rollouts.size(); i > 1; --i) std::swap(s.rollouts[i - 1], s.rollouts[rng.index(i)]);
  EXPECT_EQ(confusion_report(mine_confusion_points(cohort.rollouts)), ref);
}

TEST(Coverage, BoundsAndMonotone) {
  std::vector<ConfusionPoint> ranked = {{"A-1-3", 5, {}, {}}, {"A-1-4", 3, {}, {}}, {"A-1-5", 1, {}, {}}};
  const std::vector<ErrorInstance> at_top = {{"p", NodeRef::parse("A-1-3")}, {"q", NodeRef::parse("A-1-3")}};
  EXPECT_EQ(*error_coverage(ranked, at_top, 1), 1.0);
  const std::vector<ErrorInstance> elsewhere = {{"p", NodeRef::parse("B-1-1")}};
  EXPECT_EQ(*error_coverage(ranked, elsewhere, 5), 0.0);
  EXPECT_FALSE(error_coverage(ranked, {}, 5));

  SimCohortSpec spec{40, {{"m", 0.4, 1.0, 3}}, 12, 10};
  const auto cohort = simulate_cohort(spec, toy_graph(), prompts());
  const auto mined = mine_confusion_points(cohort.rollouts);
  const auto errors = human_error_nodes(cohort.rollouts, cohort.cases);
  ASSERT_FALSE(errors.empty());
  double last = 0;
  for (std::size_t n = 0; n <= mined.size() + 1; ++n) {
    const double c = *error_coverage(mined, errors, n);
    EXPECT_GE(c, last);
    EXPECT_LE(c, 1.0);
    last = c;
  }
}
