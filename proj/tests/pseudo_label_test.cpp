// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "guidebench/pseudo_label.hpp"
#include "guidebench/simulation.hpp"
#include "support.hpp"

using namespace gbtest;

namespace {

const GuidelinePath kA = P("TGL-1-1 → TGL-1-2 → TGL-2-2");
const GuidelinePath kB = P("TGL-1-1 → TGL-1-3 → TGL-3-4");
const GuidelinePath kC = P("TGL-1-1 → TGL-1-3 → TGL-3-1 → TGL-3-2 → TGL-3-3");

RolloutSet split_set(const std::string& model, const std::string& pid, std::size_t n_a, const GuidelinePath& other,
                     std::size_t k = 10) {
  std::vector<GuidelinePath> paths(n_a, kA);
  paths.resize(k, other);
  return make_set(model, pid, paths);
}

PseudoLabel treatment_label(const GuidelinePath& p) {
  PseudoLabel l;
  l.label_treatment = p.back();
  l.source = ProxyMethod::cross_treatment;
  return l;
}

}  // namespace

TEST(SelfConsistency, Examples) {
  const auto all = self_consistency_label(split_set("m", "p", 10, kB), MetricKind::treatment_match, 0.9);
  EXPECT_TRUE(all.accepted());
  EXPECT_EQ(all.agreement, 1.0);
  const auto nine = self_consistency_label(split_set("m", "p", 9, kB), MetricKind::treatment_match, 0.9);
  EXPECT_TRUE(nine.accepted());
  EXPECT_EQ(nine.agreement, 0.9);
  EXPECT_EQ(nine.label->label_treatment->render(), "TGL-2-2");
  const auto six = self_consistency_label(split_set("m", "p", 6, kB), MetricKind::treatment_match, 0.9);
  EXPECT_FALSE(six.accepted());
  EXPECT_FALSE(six.reason.empty());
  EXPECT_FALSE(self_consistency_label(split_set("m", "p", 9, kB), MetricKind::treatment_match, 1.0).accepted());
}

TEST(SelfConsistency, OverlapVariantUsesModePath) {
  const auto d = self_consistency_label(split_set("m", "p", 10, kB), MetricKind::path_overlap, 0.9);
  ASSERT_TRUE(d.accepted());
  EXPECT_EQ(*d.label->label_path, kA);
  const auto none = self_consistency_label(make_set("m", "p", std::vector<GuidelinePath>(3)), MetricKind::path_overlap);
  EXPECT_FALSE(none.accepted());
}

TEST(SelfBenchmark, RaisingDeltaNeverAddsEntriesAndLabelsAreModes) {
  SimCohortSpec spec{80, {{"m", 0.5, 0.8, 3}}, 14, 10};
  const auto cohort = simulate_cohort(spec, toy_graph(), prompts());
  std::size_t last = cohort.rollouts.size() + 1;
  for (double delta : {0.0, 0.3, 0.5, 0.7, 0.9, 1.0}) {
    const auto b = build_self_benchmark(cohort.rollouts, MetricKind::treatment_match, delta);
    EXPECT_LE(b.entries.size(), last);
    EXPECT_EQ(b.entries.size() + b.zero_scored.size(), cohort.rollouts.size());
    last = b.entries.size();
    for (const auto& e : b.entries) {
      const auto& set = *std::find_if(cohort.rollouts.begin(), cohort.rollouts.end(),
                                      [&](const RolloutSet& s) { return s.patient_id == e.patient_id; });
      std::map<std::string, int> counts;
      for (const auto& p : set.paths())
        if (!p.empty()) ++counts[p.back().render()];
      int best = 0;
      for (const auto& [_, c] : counts) best = std::max(best, c);
      EXPECT_EQ(counts[e.label.label_treatment->render()], best);
      EXPECT_GE(e.label.agreement, delta);
    }
  }
}

TEST(SelfBenchmark, LowConsistencyModelHasZeroScoredEntries) {
  SimCohortSpec spec{40, {{"shaky", 0.3, 1.0, 3}}, 5, 10};
  const auto cohort = simulate_cohort(spec, toy_graph(), prompts());
  EXPECT_GE(build_self_benchmark(cohort.rollouts, MetricKind::treatment_match).zero_scored.size(), 1u);
  SimCohortSpec steady{20, {{"steady", 1.0, 0.0, 1}}, 5, 10};
  const auto c2 = simulate_cohort(steady, toy_graph(), prompts());
  EXPECT_TRUE(build_self_benchmark(c2.rollouts, MetricKind::treatment_match).zero_scored.empty());
  EXPECT_THROW(build_self_benchmark(std::vector<RolloutSet>{}, MetricKind::treatment_match), std::invalid_argument);
}

TEST(CrossModel, MajorityAndExclusion) {
  using Pair = std::pair<std::string, PseudoLabel>;
  const std::vector<Pair> two_one = {{"A", treatment_label(kA)}, {"B", treatment_label(kA)}, {"C", treatment_label(kB)}};
  const auto l = cross_model_label(two_one);
  ASSERT_TRUE(l);
  EXPECT_EQ(l->label_treatment->render(), "TGL-2-2");
  EXPECT_NEAR(l->agreement, 2.0 / 3.0, 1e-15);
  const std::vector<Pair> split = {{"A", treatment_label(kA)}, {"B", treatment_label(kB)}, {"C", treatment_label(kC)}};
  EXPECT_FALSE(cross_model_label(split));
  const std::vector<Pair> alone = {{"A", treatment_label(kA)}};
  EXPECT_FALSE(cross_model_label(alone));
}

TEST(CrossModel, OrderInvariant) {
  using Pair = std::pair<std::string, PseudoLabel>;
  std::vector<Pair> v = {{"A", treatment_label(kA)}, {"B", treatment_label(kB)}, {"C", treatment_label(kA)},
                         {"D", treatment_label(kB)}, {"E", treatment_label(kC)}};
  const auto ref = cross_model_label(v);
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
    const auto got = cross_model_label(v);
    ASSERT_EQ(got.has_value(), ref.has_value());
    EXPECT_EQ(got->value_key(), ref->value_key());
  }
}

TEST(Scoring, Examples) {
  ProxyBenchmark bench;
  bench.method = ProxyMethod::cross_treatment;
  for (int i = 0; i < 4; ++i) {
    PseudoLabel l = treatment_label(kA);
    l.patient_id = "P" + std::to_string(i);
    bench.entries.push_back({l.patient_id, l, ""});
  }
  std::vector<RolloutSet> perfect, half;
  for (int i = 0; i < 4; ++i) {
    perfect.push_back(make_set("m", "P" + std::to_string(i), std::vector<GuidelinePath>(10, kA)));
    half.push_back(make_set("m", "P" + std::to_string(i), std::vector<GuidelinePath>(10, i % 2 ? kA : kB)));
  }
  EXPECT_EQ(score_model_on_proxy(perfect, bench, MetricKind::treatment_match).mean, 1.0);
  EXPECT_EQ(score_model_on_proxy(half, bench, MetricKind::treatment_match).mean, 0.5);
  EXPECT_EQ(score_against(GuidelinePath{}, bench.entries[0].label, MetricKind::treatment_match), 0.0);
}

TEST(Scoring, ZeroScoredPenalizesSourceModelOnly) {
  SimCohortSpec spec{30, {{"src", 0.4, 1.0, 3}, {"other", 0.8, 0.2, 2}}, 6, 10};
  const auto cohort = simulate_cohort(spec, toy_graph(), prompts());
  std::vector<RolloutSet> src, other;
  for (const auto& s : cohort.rollouts) (s.model_id == "src" ? src : other).push_back(s);
  const auto bench = build_self_benchmark(src, MetricKind::treatment_match);
  ASSERT_FALSE(bench.zero_scored.empty());
  const auto own = score_model_on_proxy(src, bench, MetricKind::treatment_match);
  EXPECT_EQ(own.n_zero_scored, bench.zero_scored.size());
  EXPECT_EQ(own.n_cases, bench.entries.size() + bench.zero_scored.size());
}

TEST(Scoring, PerfectModelFixedPoint) {
  SimCohortSpec spec{25, {{"a", 1.0, 0.0, 1}, {"b", 1.0, 0.0, 1}}, 9, 10};
  const auto cohort = simulate_cohort(spec, toy_graph(), prompts());
  std::vector<RolloutSet> a;
  for (const auto& s : cohort.rollouts)
    if (s.model_id == "a") a.push_back(s);
  for (auto metric : {MetricKind::treatment_match, MetricKind::path_overlap}) {
    EXPECT_EQ(score_model_on_truth(a, cohort.cases, metric).mean, 1.0);
    EXPECT_EQ(score_model_on_proxy(a, build_self_benchmark(a, metric), metric).mean, 1.0);
    EXPECT_EQ(score_model_on_proxy(a, build_cross_benchmark(cohort.rollouts, metric), metric).mean, 1.0);
  }
}

TEST(Scoring, MeanSem) {
  const std::vector<double> v = {1, 0, 1, 0};
  const auto s = mean_sem(v);
  EXPECT_EQ(s.mean, 0.5);
  EXPECT_NEAR(s.sem, std::sqrt(1.0 / 3.0) / 2.0, 1e-15);
}

TEST(Benchmark, FileRoundTrip) {
  SimCohortSpec spec{15, {{"a", 0.7, 0.5, 2}, {"b", 0.6, 0.5, 2}}, 10, 10};
  const auto cohort = simulate_cohort(spec, toy_graph(), prompts());
  const auto bench = build_cross_benchmark(cohort.rollouts, MetricKind::path_overlap);
  TempDir dir("bench");
  write_benchmark(dir / "b.jsonl", bench);
  EXPECT_TRUE(std::filesystem::exists(dir / "b.jsonl.manifest.json"));
  const auto back = load_benchmark(dir / "b.jsonl");
  EXPECT_EQ(back.method, bench.method);
  ASSERT_EQ(back.entries.size(), bench.entries.size());
  for (std::size_t i = 0; i < back.entries.size(); ++i)
    EXPECT_EQ(back.entries[i].label.value_key(), bench.entries[i].label.value_key());
}
