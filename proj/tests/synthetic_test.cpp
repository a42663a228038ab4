// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "guidebench/simulation.hpp"
#include "guidebench/synthetic.hpp"
#include "support.hpp"

using namespace gbtest;

namespace {

SimulatedPredictor model(const std::string& id, double acc, double flip = 0.0, double pref = 1.0, double beta = 0.0) {
  return SimulatedPredictor(id, {acc, beta, 2, flip, pref, 3});
}

const GuidelinePath kTarget = P("TGL-1-1 → TGL-1-2 → TGL-2-1 → TGL-2-4 → TGL-2-5");

std::vector<std::string> exemplars() { return load_exemplars(asset("exemplars")); }

}  // namespace

TEST(Structured, FaithfulGeneratorKeepsCase) {
  auto gen = model("gen", 1.0);
  const auto r = generate_structured_case(gen, toy_graph(), kTarget, 5, prompts());
  EXPECT_TRUE(r.kept()) << r.reason;
  ASSERT_TRUE(r.reconstructed);
  EXPECT_EQ(*r.reconstructed, kTarget);
  for (const char* key : kStructuredFields) EXPECT_TRUE(r.fields->contains(key)) << key;
}

TEST(Structured, BranchFlipIsDiscarded) {
  auto gen = model("gen", 1.0, 1.0);
  const auto r = generate_structured_case(gen, toy_graph(), kTarget, 5, prompts());
  EXPECT_FALSE(r.kept());
  EXPECT_FALSE(r.raw_reconstruction.empty());
}

TEST(Structured, NeedsTerminalTarget) {
  auto gen = model("gen", 1.0);
  EXPECT_THROW(generate_structured_case(gen, toy_graph(), P("TGL-1-1 → TGL-1-2"), 1, prompts()),
               std::invalid_argument);
}

TEST(Notes, NoLeakAndExemplarsRequired) {
  auto gen = model("gen", 1.0);
  const auto ex = exemplars();
  ASSERT_GE(ex.size(), 3u);
  const auto note = generate_note(gen, toy_graph(), kTarget, nullptr, ex, 9, prompts());
  EXPECT_FALSE(note.empty());
  EXPECT_FALSE(leaks_node_ids(note));
  EXPECT_THROW(generate_note(gen, toy_graph(), kTarget, nullptr, {}, 9, prompts()), std::invalid_argument);
  EXPECT_TRUE(leaks_node_ids("the patient reached TGL-2-5 today"));
  EXPECT_FALSE(leaks_node_ids("ECOG 0 to 1, stage II"));
}

TEST(Notes, StructuredNoteFollowsRecord) {
  auto gen = model("gen", 1.0);
  const auto r = generate_structured_case(gen, toy_graph(), kTarget, 5, prompts());
  const auto note = generate_note(gen, toy_graph(), kTarget, &*r.fields, exemplars(), 9, prompts());
  EXPECT_EQ(trace_by_keywords(toy_graph(), note), kTarget);
}

TEST(Preference, Outcomes) {
  auto gen = model("gen", 1.0);
  const auto note = generate_note(gen, toy_graph(), kTarget, nullptr, exemplars(), 4, prompts());

  auto exact = model("exact", 1.0);
  const auto a = select_label_by_preference(exact, "gen", toy_graph(), note, kTarget, 1, prompts());
  EXPECT_TRUE(a.accepted);
  EXPECT_EQ(a.verification, Verification::regenerated);
  EXPECT_FALSE(a.compared);

  auto verifier = model("verifier", 0.0, 0.0, 1.0);
  const auto b = select_label_by_preference(verifier, "gen", toy_graph(), note, kTarget, 1, prompts());
  EXPECT_TRUE(b.accepted);
  EXPECT_EQ(b.verification, Verification::preference_selected);
  EXPECT_TRUE(b.compared);

  auto stubborn = model("stubborn", 0.0, 0.0, 0.0);
  const auto c = select_label_by_preference(stubborn, "gen", toy_graph(), note, kTarget, 1, prompts());
  EXPECT_FALSE(c.accepted);
  EXPECT_FALSE(c.reason.empty());

  EXPECT_THROW(select_label_by_preference(gen, "gen", toy_graph(), note, kTarget, 1, prompts()), std::invalid_argument);
}

TEST(Preference, ParseChoice) {
  EXPECT_EQ(parse_choice("I think... Choice: B"), 'B');
  EXPECT_EQ(parse_choice("Choice: A\nActually, Choice: B"), 'B');
  EXPECT_FALSE(parse_choice("no idea"));
}

TEST(Benchmark, FaithfulPairAcceptsEverything) {
  auto gen = model("gen", 1.0);
  auto eva = model("eva", 1.0);
  const auto b = build_synthetic_benchmark({SynthMode::unstructured, 30, 3, 5, 2}, gen, eva, toy_graph(), exemplars(),
                                           prompts());
  EXPECT_EQ(b.cases.size(), 30u);
  EXPECT_EQ(b.stats.acceptance_rate(), 1.0);
}

TEST(Benchmark, SelfPreferringEvaluatorOnlyKeepsRegenerations) {
  auto gen = model("gen", 1.0);
  auto eva = model("eva", 0.5, 0.0, 0.0, 0.8);
  const auto b = build_synthetic_benchmark({SynthMode::unstructured, 30, 3, 5, 2}, gen, eva, toy_graph(), exemplars(),
                                           prompts());
  EXPECT_EQ(b.stats.preference_selected, 0u);
  EXPECT_EQ(b.stats.accepted, b.stats.regenerated);
  EXPECT_GT(b.stats.rejected_preference, 0u);
}

TEST(Benchmark, FiftyCasesWithProvenance) {
  auto gen = model("gen", 1.0, 0.3);
  auto eva = model("eva", 0.6, 0.0, 0.9, 0.5);
  const auto b = build_synthetic_benchmark({SynthMode::structured, 50, 3, 5, 8}, gen, eva, toy_graph(), exemplars(),
                                           prompts());
  ASSERT_EQ(b.cases.size(), 50u);
  EXPECT_GT(b.stats.discarded_reconstruction, 0u);
  for (const auto& c : b.cases) {
    EXPECT_EQ(c.provenance, SynthMode::structured);
    EXPECT_TRUE(c.structured_fields);
    EXPECT_EQ(c.generator_id, "gen");
    EXPECT_EQ(c.evaluator_id, "eva");
    EXPECT_FALSE(leaks_node_ids(c.note_text));
  }
  // Every discard is auditable.
  std::size_t audited = 0;
  for (const auto& a : b.audit) audited += a.value("stage", "") == "reconstruction";
  EXPECT_EQ(audited, b.stats.discarded_reconstruction);

  TempDir dir("synth");
  write_synthetic(dir / "s.jsonl", b);
  const auto back = load_synthetic(dir / "s.jsonl");
  ASSERT_EQ(back.size(), 50u);
  EXPECT_EQ(back[7].target_path, b.cases[7].target_path);
  EXPECT_EQ(back[7].note_text, b.cases[7].note_text);
  const auto proxy = b.to_proxy();
  EXPECT_EQ(proxy.method, ProxyMethod::synth_structured);
  EXPECT_EQ(proxy.entries.size(), 50u);
}

TEST(Benchmark, BudgetExhaustionIsReported) {
  auto gen = model("gen", 1.0, 1.0);
  auto eva = model("eva", 1.0);
  const auto b = build_synthetic_benchmark({SynthMode::structured, 5, 3, 2, 8}, gen, eva, toy_graph(), exemplars(),
                                           prompts());
  EXPECT_TRUE(b.stats.budget_exhausted);
  EXPECT_TRUE(b.cases.empty());
  EXPECT_EQ(b.stats.attempts, 10u);
}
