// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidebench/simulation.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

namespace guidebench {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

/// First whole-phrase occurrence of `needle` at or after `from`.
std::size_t find_phrase(const std::string& hay, const std::string& needle, std::size_t from) {
  if (needle.empty()) return std::string::npos;
  for (auto pos = hay.find(needle, from); pos != std::string::npos; pos = hay.find(needle, pos + 1)) {
    const bool left = pos == 0 || !word_char(hay[pos - 1]);
    const auto end = pos + needle.size();
    const bool right = end == hay.size() || !word_char(hay[end]);
    if (left && right) return pos;
  }
  return std::string::npos;
}

const char* const kSentences[] = {
    "Work-up documents %s.",
    "Findings are consistent with %s.",
    "The team records %s.",
    "Review confirms %s.",
};

const char* const kHistology[] = {"glandular pattern", "squamous pattern", "mixed pattern"};

std::string sentence(const char* pattern, const std::string& label) {
  std::string out(pattern);
  out.replace(out.find("%s"), 2, label);
  return out;
}

std::string final_line(const GuidelinePath& p) { return "Final path: " + p.render(); }

}  // namespace

GuidelinePath trace_by_keywords(const GuidelineGraph& graph, std::string_view text) {
  const auto hay = lower(text);
  std::vector<NodeRef> nodes;
  std::size_t cursor = 0;

  auto earliest = [&](const std::vector<NodeRef>& candidates, std::size_t from) {
    std::optional<NodeRef> best;
    std::size_t best_pos = std::string::npos, best_end = 0;
    for (const auto& c : candidates) {
      const auto label = lower(graph.at(c).label);
      const auto pos = find_phrase(hay, label, from);
      if (pos < best_pos) {
        best = c;
        best_pos = pos;
        best_end = pos + label.size();
      }
    }
    return std::make_pair(best, best_end);
  };

  auto [root, end] = earliest(graph.roots(), 0);
  if (!root) {
    if (graph.roots().size() != 1) return {};
    root = graph.roots().front();
    end = 0;
  }
  nodes.push_back(*root);
  cursor = end;
  while (true) {
    const auto& node = graph.at(nodes.back());
    if (node.children.empty()) break;
    auto [next, next_end] = earliest(node.children, cursor);
    if (!next) std::tie(next, next_end) = earliest(node.children, 0);
    if (!next || std::find(nodes.begin(), nodes.end(), *next) != nodes.end()) break;
    nodes.push_back(*next);
    cursor = next_end;
  }
  return resolve_terminal(GuidelinePath(std::move(nodes)), graph);
}

std::string describe_path(const GuidelineGraph& graph, const GuidelinePath& path, Rng& rng) {
  std::string out;
  for (const auto& n : path.nodes()) {
    if (!out.empty()) out += ' ';
    out += sentence(kSentences[rng.index(std::size(kSentences))], graph.at(n).label);
  }
  return out;
}

nlohmann::json make_structured_fields(const GuidelineGraph& graph, const GuidelinePath& target, Rng& rng,
                                      double flip_rate) {
  std::vector<std::string> stages;
  for (const auto& n : target.nodes()) stages.push_back(graph.at(n).label);

  if (flip_rate > 0 && rng.uniform01() < flip_rate) {
    const auto& ns = target.nodes();
    std::vector<std::size_t> spots;
    for (std::size_t i = 1; i < ns.size(); ++i)
      if (graph.at(ns[i - 1]).children.size() > 1) spots.push_back(i);
    if (!spots.empty()) {
      const auto at = spots[rng.index(spots.size())];
      std::vector<NodeRef> siblings;
      for (const auto& c : graph.at(ns[at - 1]).children)
        if (c != ns[at]) siblings.push_back(c);
      stages[at] = graph.at(siblings[rng.index(siblings.size())]).label;
    }
  }

  std::string joined;
  for (const auto& s : stages) joined += (joined.empty() ? "" : "; ") + s;
  return {
      {"stage_descriptors", joined},
      {"histology", kHistology[rng.index(std::size(kHistology))]},
      {"biomarker_panel", "as recorded in stage descriptors"},
      {"prior_treatments", "none documented"},
      {"performance_status", "ECOG 0 to 1"},
  };
}

SimulatedPredictor::SimulatedPredictor(std::string model_id, SimulationParams params)
    : id_(std::move(model_id)), params_(params) {
  params_.validate();
}

double SimulatedPredictor::patient_offset(const std::string& patient_id) const {
  Rng rng(derive_seed(params_.seed, "u", patient_id));
  return rng.uniform(-0.5, 0.5);
}

double SimulatedPredictor::emission_probability(const std::string& patient_id) const {
  return std::clamp(params_.accuracy + params_.consistency * patient_offset(patient_id), 0.0, 1.0);
}

std::vector<GuidelinePath> SimulatedPredictor::decoy_pool(const GuidelineGraph& graph, const GuidelinePath& truth,
                                                          const std::string& patient_id) const {
  std::vector<GuidelinePath> pool;
  for (int j = 0; j < params_.decoys; ++j) {
    Rng rng(derive_seed(params_.seed, "decoy", id_ + "/" + patient_id + "/" + std::to_string(j)));
    pool.push_back(branch_path(graph, truth, rng).value_or(truth));
  }
  return pool;
}

Completion SimulatedPredictor::complete(const Request& request) {
  if (request.context.graph == nullptr)
    throw BackendError("simulated backend needs the graph in the request context");
  std::string text;
  switch (request.role) {
    case Role::predict_path: text = predict(request); break;
    case Role::fill_structured: text = fill_structured(request); break;
    case Role::reconstruct_path: text = reconstruct(request); break;
    case Role::write_note: text = write_note(request); break;
    case Role::choose_preference: text = choose(request); break;
  }
  return {std::move(text), kTimestamp};
}

std::string SimulatedPredictor::predict(const Request& request) const {
  const auto& graph = *request.context.graph;
  const auto* patient = request.context.patient;
  if (patient == nullptr) throw BackendError("simulated predict_path needs a patient");
  GuidelinePath truth = patient->annotated_path.value_or(GuidelinePath{});
  if (truth.empty()) truth = trace_by_keywords(graph, patient->note_text);
  if (truth.empty()) truth = sample_random_path(graph, derive_seed(params_.seed, "truth", patient->patient_id));

  const auto pool = decoy_pool(graph, truth, patient->patient_id);
  Rng emit(derive_seed(request.seed, "emit", id_));
  const bool right = emit.uniform01() < emission_probability(patient->patient_id);
  const auto& chosen = right ? truth : pool[emit.index(pool.size())];

  std::string out = "Tracing the note through the guideline.\n";
  const auto& other = chosen == truth ? pool.front() : truth;
  if (!(other == chosen) && emit.uniform01() < 0.5) out += "Considered: " + other.render() + "\n";
  return out + final_line(chosen);
}

std::string SimulatedPredictor::fill_structured(const Request& request) const {
  if (request.context.target == nullptr) throw BackendError("simulated fill_structured needs a target path");
  Rng rng(derive_seed(request.seed, "fields", id_));
  return make_structured_fields(*request.context.graph, *request.context.target, rng, params_.flip_rate).dump(1);
}

std::string SimulatedPredictor::reconstruct(const Request& request) const {
  if (request.context.fields == nullptr) throw BackendError("simulated reconstruct_path needs a record");
  const auto& f = *request.context.fields;
  std::string text;
  for (const char* key : kStructuredFields) {
    if (f.contains(key) && f[key].is_string()) text += f[key].get<std::string>() + "\n";
  }
  auto path = trace_by_keywords(*request.context.graph, text);
  if (path.empty()) return "The record does not determine a path.";
  return final_line(path);
}

std::string SimulatedPredictor::write_note(const Request& request) const {
  if (request.context.target == nullptr) throw BackendError("simulated write_note needs a target path");
  const auto& graph = *request.context.graph;
  Rng rng(derive_seed(request.seed, "note", id_));
  std::string body;
  if (request.context.fields != nullptr) {
    const auto& f = *request.context.fields;
    std::string stages = f.value("stage_descriptors", "");
    for (std::size_t pos = 0; pos < stages.size();) {
      auto semi = stages.find("; ", pos);
      auto part = stages.substr(pos, semi == std::string::npos ? std::string::npos : semi - pos);
      body += (body.empty() ? "" : " ") + sentence(kSentences[rng.index(std::size(kSentences))], part);
      pos = semi == std::string::npos ? stages.size() : semi + 2;
    }
    body += " Histology shows a " + f.value("histology", "pattern not stated") + ".";
    body += " Performance status " + f.value("performance_status", "not stated") + ".";
  } else {
    body = describe_path(graph, *request.context.target, rng);
  }
  return "History: fictional patient seen in clinic.\nAssessment: " + body + "\nPlan: discussed at board.";
}

std::string SimulatedPredictor::choose(const Request& request) const {
  const auto* a = request.context.option_a;
  const auto* b = request.context.option_b;
  const auto* target = request.context.target;
  if (a == nullptr || b == nullptr || target == nullptr)
    throw BackendError("simulated choose_preference needs both options and the target");
  Rng rng(derive_seed(request.seed, "prefer", id_));
  const bool pick_target = rng.uniform01() < params_.preference_accuracy;
  const bool a_is_target = *a == *target;
  return std::string("Choice: ") + ((pick_target == a_is_target) ? "A" : "B");
}

std::string patient_id_for(std::size_t index) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "P%04zu", index + 1);
  return buf;
}

Seed rollout_seed(Seed run_seed, const std::string& model_id, const std::string& patient_id) {
  return derive_seed(run_seed, "rollouts", model_id + "/" + patient_id);
}

std::vector<PatientCase> simulate_cases(const GuidelineGraph& graph, std::size_t n, Seed seed) {
  std::vector<PatientCase> cases;
  cases.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PatientCase c;
    c.patient_id = patient_id_for(i);
    auto truth = sample_random_path(graph, derive_seed(seed, "truth", c.patient_id));
    Rng rng(derive_seed(seed, "note", c.patient_id));
    c.note_text = "Fictional patient " + c.patient_id + ". " + describe_path(graph, truth, rng);
    c.annotated_path = std::move(truth);
    cases.push_back(std::move(c));
  }
  return cases;
}

void SimCohortSpec::validate() const {
  if (n_patients < 1) throw std::invalid_argument("n_patients must be at least 1");
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  std::vector<std::string> ids;
  for (const auto& m : models) {
    SimulationParams p{m.accuracy, m.consistency, m.decoys, 0.0, 1.0, seed};
    p.validate();
    ids.push_back(m.model_id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw std::invalid_argument("model ids must be unique");
}

SimulatedCohort simulate_cohort(const SimCohortSpec& spec, const GuidelineGraph& graph, const PromptSet& prompts,
                                RolloutStore* store) {
  spec.validate();
  SimulatedCohort out;
  out.cases = simulate_cases(graph, spec.n_patients, spec.seed);
  for (const auto& m : spec.models) {
    SimulationParams p{m.accuracy, m.consistency, m.decoys, 0.0, 1.0, spec.seed};
    SimulatedPredictor predictor(m.model_id, p);
    for (const auto& c : out.cases)
      out.rollouts.push_back(
          sample_rollouts(predictor, graph, c, spec.k, rollout_seed(spec.seed, m.model_id, c.patient_id), prompts,
                          store));
  }
  return out;
}

}  // namespace guidebench
