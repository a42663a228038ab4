// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "guidebench/graph.hpp"
#include "guidebench/metrics.hpp"
#include "guidebench/predictor.hpp"

namespace guidebench {

enum class ProxyMethod {
  self_overlap,
  self_treatment,
  cross_overlap,
  cross_treatment,
  synth_structured,
  synth_unstructured,
};

std::string to_string(ProxyMethod m);
ProxyMethod proxy_method_from_string(const std::string& s);
bool is_self(ProxyMethod m);

struct PseudoLabel {
  std::string patient_id;
  /// Set for overlap-type labels and synthetic targets.
  std::optional<GuidelinePath> label_path;
  /// Set for treatment-type labels and synthetic targets.
  std::optional<NodeRef> label_treatment;
  ProxyMethod source = ProxyMethod::self_treatment;
  double agreement = 0.0;

  /// Comparison key: sorted node set for overlap labels, final node otherwise.
  std::string value_key() const;
  std::string render() const;
};

struct LabelDecision {
  std::optional<PseudoLabel> label;
  double agreement = 0.0;
  /// Why the case was rejected; empty when accepted.
  std::string reason;

  bool accepted() const { return label.has_value(); }
};

/// Agreement over all k rollouts (failures count as empty paths). Accepted
/// when agreement >= delta; the label is the mode node set or mode final node.
LabelDecision self_consistency_label(const RolloutSet& rollouts, MetricKind metric, double delta = 0.9);

/// Mode label with no threshold; nullopt when no rollout parsed.
std::optional<PseudoLabel> mode_label(const RolloutSet& rollouts, MetricKind metric, ProxyMethod source);

struct BenchmarkEntry {
  std::string patient_id;
  PseudoLabel label;
  /// Synthetic cases carry their generated note.
  std::string note_text;
};

struct ProxyBenchmark {
  ProxyMethod method = ProxyMethod::self_treatment;
  /// Model whose rollouts produced the labels (self variants only).
  std::string source_model;
  std::vector<BenchmarkEntry> entries;
  /// Rejected cases that score 0 for the source model.
  std::vector<std::string> zero_scored;
};

ProxyBenchmark build_self_benchmark(std::span<const RolloutSet> model_rollouts, MetricKind metric,
                                    double delta = 0.9);

/// Plurality over per-model labels with support >= 2; ties go to the
/// lexicographically smallest value key. nullopt means excluded.
std::optional<PseudoLabel> cross_model_label(std::span<const std::pair<std::string, PseudoLabel>> per_model);

/// Per-model unthresholded mode labels, aggregated per patient.
ProxyBenchmark build_cross_benchmark(std::span<const RolloutSet> all_rollouts, MetricKind metric);

struct ProxyScore {
  double mean = 0.0;
  double sem = 0.0;
  std::size_t n_cases = 0;
  std::size_t n_zero_scored = 0;
};

/// Per-rollout score against a label: Jaccard of node sets, or final-node
/// equality. Empty predictions score 0.
double score_against(const GuidelinePath& prediction, const PseudoLabel& label, MetricKind metric);

/// Mean +- SEM of per-case scores, each case being the mean over the model's
/// rollouts. Throws std::invalid_argument if no benchmark case has rollouts.
ProxyScore score_model_on_proxy(std::span<const RolloutSet> model_rollouts, const ProxyBenchmark& bench,
                                MetricKind metric);

/// Same scoring against annotated paths.
ProxyScore score_model_on_truth(std::span<const RolloutSet> model_rollouts, std::span<const PatientCase> cases,
                                MetricKind metric);

ProxyScore mean_sem(std::span<const double> values);

/// JSONL entries plus `<path>.manifest.json` holding method, source, and
/// the zero_scored list.
void write_benchmark(const std::filesystem::path& path, const ProxyBenchmark& bench);
ProxyBenchmark load_benchmark(const std::filesystem::path& path);

}  // namespace guidebench
