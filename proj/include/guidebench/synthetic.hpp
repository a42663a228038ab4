// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "guidebench/graph.hpp"
#include "guidebench/predictor.hpp"
#include "guidebench/pseudo_label.hpp"

namespace guidebench {

enum class SynthMode { structured, unstructured };
enum class Verification { regenerated, preference_selected };

std::string to_string(SynthMode m);
SynthMode synth_mode_from_string(const std::string& s);
std::string to_string(Verification v);

struct SyntheticCase {
  std::string case_id;
  GuidelinePath target_path;
  /// Present iff provenance == structured.
  std::optional<nlohmann::json> structured_fields;
  std::string note_text;
  SynthMode provenance = SynthMode::unstructured;
  Verification verification = Verification::regenerated;
  std::string generator_id;
  std::string evaluator_id;
};

struct StructuredResult {
  std::optional<nlohmann::json> fields;
  std::optional<GuidelinePath> reconstructed;
  std::string raw_fields;
  std::string raw_reconstruction;
  std::string reason;

  bool kept() const { return reason.empty(); }
};

/// Fills the record, then re-derives the path from the record alone. Cases
/// whose reconstruction differs from `target` are discarded (reason set).
StructuredResult generate_structured_case(Predictor& generator, const GuidelineGraph& graph,
                                          const GuidelinePath& target, Seed seed, const PromptSet& prompts);

/// Throws std::invalid_argument on empty exemplars and BackendError on empty output.
std::string generate_note(Predictor& generator, const GuidelineGraph& graph, const GuidelinePath& target,
                          const nlohmann::json* fields, std::span<const std::string> exemplars, Seed seed,
                          const PromptSet& prompts);

struct PreferenceOutcome {
  bool accepted = false;
  Verification verification = Verification::regenerated;
  std::optional<GuidelinePath> predicted;
  /// Only meaningful when the pairwise step ran.
  bool target_in_slot_a = false;
  bool compared = false;
  std::string raw_prediction;
  std::string raw_choice;
  std::string reason;
};

/// The evaluator predicts a path from the note. An exact match is accepted
/// as regenerated; otherwise both paths are shown in a seed-fixed random
/// order and the case is kept only if the target is chosen.
PreferenceOutcome select_label_by_preference(Predictor& evaluator, const std::string& generator_id,
                                             const GuidelineGraph& graph, const std::string& note_text,
                                             const GuidelinePath& target, Seed seed, const PromptSet& prompts);

/// "A" or "B" from the last "Choice:" line; nullopt if absent.
std::optional<char> parse_choice(std::string_view raw);

struct SynthStats {
  std::size_t attempts = 0;
  std::size_t accepted = 0;
  std::size_t discarded_reconstruction = 0;
  std::size_t discarded_leak = 0;
  std::size_t rejected_preference = 0;
  std::size_t regenerated = 0;
  std::size_t preference_selected = 0;
  std::size_t backend_failures = 0;
  bool budget_exhausted = false;

  double acceptance_rate() const {
    return attempts == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(attempts);
  }
  nlohmann::json to_json() const;
};

struct SynthConfig {
  SynthMode mode = SynthMode::unstructured;
  std::size_t n_cases = 0;
  std::size_t exemplar_count = 3;
  /// Attempts allowed per requested case.
  std::size_t budget_factor = 5;
  Seed seed = 0;
};

struct SyntheticBenchmark {
  SynthMode mode = SynthMode::unstructured;
  std::vector<SyntheticCase> cases;
  /// One record per discarded or rejected attempt.
  std::vector<nlohmann::json> audit;
  SynthStats stats;

  ProxyBenchmark to_proxy() const;
};

/// Loops target sampling, optional structured step, note generation, and
/// preference selection until n_cases are accepted or the budget of
/// budget_factor * n_cases attempts runs out (stats.budget_exhausted).
SyntheticBenchmark build_synthetic_benchmark(const SynthConfig& config, Predictor& generator, Predictor& evaluator,
                                             const GuidelineGraph& graph, std::span<const std::string> exemplars,
                                             const PromptSet& prompts);

/// True if `text` contains anything that parses as a node identifier.
bool leaks_node_ids(std::string_view text);

std::vector<std::string> load_exemplars(const std::filesystem::path& dir);

/// Cases JSONL at `path`, audit at `<path>.audit.jsonl`, stats at
/// `<path>.stats.json`.
void write_synthetic(const std::filesystem::path& path, const SyntheticBenchmark& bench);
std::vector<SyntheticCase> load_synthetic(const std::filesystem::path& path);

}  // namespace guidebench
