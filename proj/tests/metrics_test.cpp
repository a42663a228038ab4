// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "guidebench/metrics.hpp"
#include "support.hpp"

using namespace gbtest;

TEST(PathOverlap, Examples) {
  const std::vector<GuidelinePath> same = {P("A-1-1 → A-1-2"), P("A-1-1 → A-1-2")};
  EXPECT_EQ(path_overlap(same).value, 1.0);
  const std::vector<GuidelinePath> disjoint = {P("A-1-1 → B-1-1"), P("C-1-1 → D-1-1")};
  EXPECT_EQ(path_overlap(disjoint).value, 0.0);
  const std::vector<GuidelinePath> half = {P("NSCL-1-1 → NSCL-2-1 → NSCL-3-2"), P("NSCL-1-1 → NSCL-2-1 → NSCL-4-1")};
  EXPECT_EQ(path_overlap(half).value, 0.5);
  const std::vector<GuidelinePath> empty(4);
  EXPECT_EQ(path_overlap(empty).value, 1.0);
  EXPECT_EQ(path_overlap(empty).k_used, 4u);
  EXPECT_THROW(path_overlap(std::vector<GuidelinePath>{}), std::invalid_argument);
}

TEST(PathOverlap, FailedRolloutZeroesIntersection) {
  const std::vector<GuidelinePath> paths = {P("A-1-1 → A-1-2"), P("A-1-1 → A-1-2"), GuidelinePath{}};
  EXPECT_EQ(path_overlap(paths).value, 0.0);
}

TEST(PathOverlap, MatchesOracleAndIsPermutationInvariant) {
  Rng rng(11);
  for (int t = 0; t < 1000; ++t) {
    std::vector<GuidelinePath> paths;
    const std::size_t k = 1 + rng.index(10);
    const std::size_t u = 1 + rng.index(20);
    for (std::size_t i = 0; i < k; ++i) paths.push_back(random_path(rng, u));
    const double v = path_overlap(paths).value;
    EXPECT_EQ(v, oracle_overlap(paths));
    const double tc = treatment_match_consistency(paths).value;
    for (std::size_t i = k; i > 1; --i) std::swap(paths[i - 1], paths[rng.index(i)]);
    EXPECT_EQ(path_overlap(paths).value, v);
    EXPECT_EQ(treatment_match_consistency(paths).value, tc);
  }
}

TEST(PathOverlap, AddingIntersectionPathNeverLowersNumeratorShare) {
  Rng rng(12);
  for (int t = 0; t < 500; ++t) {
    std::vector<GuidelinePath> paths;
    const std::size_t u = 3 + rng.index(10);
    for (std::size_t i = 0; i < 1 + rng.index(6); ++i) paths.push_back(random_path(rng, u, 0.0));
    const double before = path_overlap(paths).value;
    std::vector<NodeRef> inter;
    for (const auto& n : paths.front().nodes()) {
      bool all = true;
      for (const auto& p : paths)
        all = all && std::find(p.nodes().begin(), p.nodes().end(), n) != p.nodes().end();
      if (all) inter.push_back(n);
    }
    if (inter.empty()) continue;
    paths.push_back(GuidelinePath(inter));
    EXPECT_GE(path_overlap(paths).value, before);
  }
}

TEST(TreatmentMatch, GroundTruth) {
  EXPECT_EQ(treatment_match_gt(P("A-1-1 → A-1-5"), P("A-1-1 → A-1-2 → A-1-5")).value, 1.0);
  EXPECT_EQ(treatment_match_gt(P("A-1-1 → A-1-4"), P("A-1-1 → A-1-5")).value, 0.0);
  EXPECT_EQ(treatment_match_gt(P("A-1-1 → A-1-2"), P("A-1-1 → A-1-2 → A-1-5")).value, 0.0);
}

TEST(TreatmentMatch, Consistency) {
  std::vector<GuidelinePath> ten(10, P("A-1-1 → A-1-2"));
  EXPECT_EQ(treatment_match_consistency(ten).value, 1.0);
  for (int i = 0; i < 3; ++i) ten[static_cast<std::size_t>(i)] = P("A-1-1 → A-1-3");
  EXPECT_DOUBLE_EQ(treatment_match_consistency(ten).value, 0.7);
  const std::vector<GuidelinePath> one = {P("A-1-1")};
  EXPECT_EQ(treatment_match_consistency(one).value, 1.0);
}

TEST(TreatmentMatch, ConsistencyAtLeastOneOverK) {
  Rng rng(13);
  for (int t = 0; t < 500; ++t) {
    std::vector<GuidelinePath> paths;
    const std::size_t k = 1 + rng.index(10);
    for (std::size_t i = 0; i < k; ++i) paths.push_back(random_path(rng, 20, 0.0));
    EXPECT_GE(treatment_match_consistency(paths).value, 1.0 / static_cast<double>(k));
  }
}

TEST(Modes, TiesBreakToSmallestKey) {
  const std::vector<GuidelinePath> paths = {P("A-1-1 → A-1-3"), P("A-1-1 → A-1-2"), GuidelinePath{}};
  EXPECT_EQ(mode_final_node(paths)->render(), "A-1-2");
  EXPECT_EQ(*mode_treatment_index(paths), 1u);
  EXPECT_EQ(*mode_path_index(paths), 1u);
  EXPECT_EQ(node_set_key(P("B-1-1 → A-1-1")), "A-1-1|B-1-1");
  EXPECT_FALSE(mode_final_node(std::vector<GuidelinePath>(2)));
}
