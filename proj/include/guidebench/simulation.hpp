// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "guidebench/graph.hpp"
#include "guidebench/predictor.hpp"

namespace guidebench {

/// Offline backend. Every role is a deterministic function of the request
/// seed, the model id, and the cohort seed in SimulationParams.
///
/// predict_path: the patient's true path y is the annotation, or else the
/// path traced through the note by label keywords. Each rollout emits y with
/// probability q = clamp(a + beta * u_p, 0, 1), where u_p ~ U(-0.5, 0.5) is
/// shared by all models for a patient, and otherwise a path from a small
/// per-(model, patient) pool of decoys that branch off y.
class SimulatedPredictor final : public Predictor {
 public:
  SimulatedPredictor(std::string model_id, SimulationParams params);

  const std::string& model_id() const override { return id_; }
  Completion complete(const Request& request) override;
  int max_concurrency() const override { return 1; }

  const SimulationParams& params() const { return params_; }
  double patient_offset(const std::string& patient_id) const;
  double emission_probability(const std::string& patient_id) const;
  std::vector<GuidelinePath> decoy_pool(const GuidelineGraph& graph, const GuidelinePath& truth,
                                        const std::string& patient_id) const;

  static constexpr const char* kTimestamp = "1970-01-01T00:00:00Z";

 private:
  std::string predict(const Request& request) const;
  std::string fill_structured(const Request& request) const;
  std::string reconstruct(const Request& request) const;
  std::string write_note(const Request& request) const;
  std::string choose(const Request& request) const;

  std::string id_;
  SimulationParams params_;
};

/// Follows the graph through `text`: from the root whose label appears first,
/// repeatedly to the child whose label occurs earliest after the current
/// match (case-insensitive). Stops when no child label appears. Empty if no
/// root label is found and the graph has several roots.
GuidelinePath trace_by_keywords(const GuidelineGraph& graph, std::string_view text);

/// Sentences naming each node's label along `path`; never contains node ids.
std::string describe_path(const GuidelineGraph& graph, const GuidelinePath& path, Rng& rng);

/// Fixed clinical record schema.
inline constexpr const char* kStructuredFields[] = {"stage_descriptors", "histology", "biomarker_panel",
                                                    "prior_treatments", "performance_status"};

/// Record for `target`. With probability `flip_rate` one stage descriptor is
/// swapped for a sibling branch's label, so reconstruction cannot recover
/// `target`.
nlohmann::json make_structured_fields(const GuidelineGraph& graph, const GuidelinePath& target, Rng& rng,
                                      double flip_rate);

std::string patient_id_for(std::size_t index);

/// Seed used for one model's rollouts on one patient.
Seed rollout_seed(Seed run_seed, const std::string& model_id, const std::string& patient_id);

/// n cases with true paths drawn by sample_random_path(derive_seed(seed,
/// "truth", id)), notes from describe_path, and annotated_path = truth.
std::vector<PatientCase> simulate_cases(const GuidelineGraph& graph, std::size_t n, Seed seed);

struct SimModel {
  std::string model_id;
  double accuracy = 1.0;
  double consistency = 0.0;
  int decoys = 1;
};

struct SimCohortSpec {
  std::size_t n_patients = 0;
  std::vector<SimModel> models;
  Seed seed = 0;
  std::size_t k = 10;

  void validate() const;
};

struct SimulatedCohort {
  std::vector<PatientCase> cases;
  /// Model-major: all patients for models[0], then models[1], ...
  std::vector<RolloutSet> rollouts;
};

SimulatedCohort simulate_cohort(const SimCohortSpec& spec, const GuidelineGraph& graph, const PromptSet& prompts,
                                RolloutStore* store = nullptr);

}  // namespace guidebench
