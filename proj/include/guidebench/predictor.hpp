// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "guidebench/chat_client.hpp"
#include "guidebench/graph.hpp"
#include "guidebench/prompt.hpp"
#include "guidebench/random.hpp"

namespace guidebench {

struct PatientCase {
  std::string patient_id;
  std::string note_text;
  std::optional<GuidelinePath> annotated_path;
  std::optional<bool> compliant;
};

nlohmann::json to_json(const PatientCase& c);
/// Throws std::invalid_argument on a malformed record or empty note.
PatientCase patient_from_json(const nlohmann::json& j, const GuidelineGraph* graph = nullptr);

void write_cohort(const std::filesystem::path& path, std::span<const PatientCase> cases);
/// Rejects duplicate patient ids.
std::vector<PatientCase> load_cohort(const std::filesystem::path& path,
                                     const GuidelineGraph* graph = nullptr);

enum class Backend { remote, replay, simulated };
std::string to_string(Backend b);
Backend backend_from_string(const std::string& s);

enum class Role { predict_path, fill_structured, reconstruct_path, write_note, choose_preference };
std::string to_string(Role r);

/// Knobs of the offline simulated backend.
struct SimulationParams {
  double accuracy = 1.0;     // a_m
  double consistency = 0.0;  // beta_m
  /// Size of the per-(model, patient) decoy pool; wrong rollouts draw from it.
  int decoys = 1;
  /// Probability that a generated structured record carries a wrong finding.
  double flip_rate = 0.0;
  /// Probability of preferring the target path in pairwise choices.
  double preference_accuracy = 1.0;
  /// Cohort-level seed; per-patient draws are derived from it.
  Seed seed = 0;

  void validate() const;
};

struct PredictorSpec {
  std::string model_id;
  Backend backend = Backend::simulated;
  double temperature = 1.0;
  SimulationParams sim;
  ChatConfig remote;
  /// Replay cache file. Remote backends append to it when set.
  std::filesystem::path cache_path;
};

/// Structured side channel passed with each prompt. The remote backend only
/// sees the rendered prompt; the simulated backend reads these instead of
/// parsing free text.
struct RequestContext {
  const GuidelineGraph* graph = nullptr;
  const PatientCase* patient = nullptr;
  const GuidelinePath* target = nullptr;
  const nlohmann::json* fields = nullptr;
  std::span<const std::string> exemplars;
  const GuidelinePath* option_a = nullptr;
  const GuidelinePath* option_b = nullptr;
};

struct Request {
  Role role = Role::predict_path;
  std::string prompt;
  Seed seed = 0;
  RequestContext context;
};

struct Completion {
  std::string text;
  std::string ts;
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual const std::string& model_id() const = 0;
  /// Throws BackendError when no text can be produced.
  virtual Completion complete(const Request& request) = 0;
  virtual int max_concurrency() const { return 1; }
};

/// Replay cache key: SHA-256 over model id, role, prompt, and seed.
std::string replay_key(const std::string& model_id, Role role, const std::string& prompt, Seed seed);

/// Append-only JSONL cache of completions, keyed by replay_key.
class ReplayCache {
 public:
  explicit ReplayCache(std::filesystem::path path);

  std::optional<Completion> lookup(const std::string& key) const;
  void store(const std::string& key, const std::string& model_id, Role role, Seed seed,
             const Completion& completion);
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, Completion> entries_;
};

std::unique_ptr<Predictor> make_predictor(const PredictorSpec& spec);

std::string utc_timestamp();

struct Prediction {
  std::string raw_text;
  std::optional<GuidelinePath> path;
  std::string parse_error;
  std::string ts;
};

Prediction predict_path(Predictor& predictor, const GuidelineGraph& graph, const PatientCase& patient,
                        const PromptSet& prompts, Seed seed);

struct Rollout {
  std::size_t index = 0;
  Seed seed = 0;
  std::string raw_text;
  /// Empty when the output held no parseable path.
  std::optional<GuidelinePath> parsed;
  std::string parse_error;
  std::string ts;
  /// Backend failure message; raw_text is empty when set.
  std::string error;

  bool failed() const { return !error.empty(); }
};

struct RolloutSet {
  std::string model_id;
  std::string patient_id;
  std::vector<Rollout> rollouts;

  std::size_t k() const { return rollouts.size(); }
  /// One path per rollout, in index order; failures and parse failures are
  /// empty paths so they still count toward k.
  std::vector<GuidelinePath> paths() const;
  std::size_t successes() const;
};

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// JSONL rollout store. Appends are serialized by a single writer lock.
class RolloutStore {
 public:
  explicit RolloutStore(std::filesystem::path path) : path_(std::move(path)) {}

  void append(const RolloutSet& set);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mu_;
};

nlohmann::json rollout_record(const std::string& model_id, const std::string& patient_id, const Rollout& r);

/// Reads and re-validates a store: dense unique indices per (model, patient)
/// and parsed paths that agree with a re-parse of raw_text. Throws StoreError.
std::vector<RolloutSet> load_rollouts(const std::filesystem::path& path,
                                      const GuidelineGraph* graph = nullptr);

/// k independent predict_path calls with seeds derive_seed(seed, "rollout", i).
/// Per-rollout backend failures are recorded; throws BackendError only if all
/// k fail. Persists to `store` (when given) before returning.
RolloutSet sample_rollouts(Predictor& predictor, const GuidelineGraph& graph, const PatientCase& patient,
                           std::size_t k, Seed seed, const PromptSet& prompts,
                           RolloutStore* store = nullptr);

}  // namespace guidebench
