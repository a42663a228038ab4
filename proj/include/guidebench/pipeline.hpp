// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "guidebench/classifier.hpp"
#include "guidebench/predictor.hpp"
#include "guidebench/prompt.hpp"

namespace guidebench {

/// Invalid or unreadable configuration. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing upstream artifact or an artifact whose hash no longer matches the
/// manifest. CLI exit code 3.
class ArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CliOverrides {
  std::optional<Seed> seed;
  std::optional<std::string> backend;
  std::optional<std::size_t> k;
  std::optional<double> delta;
  std::optional<std::string> feature_set;
  std::optional<std::vector<std::string>> models;
};

struct PipelineConfig {
  std::filesystem::path graph_path;
  std::filesystem::path prompts_dir;
  std::filesystem::path exemplars_dir;
  std::optional<std::filesystem::path> cohort_path;
  GraphFormat graph_format = GraphFormat::json;

  Seed seed = 0;
  std::size_t k = 10;
  double delta = 0.9;
  FeatureSet feature_set = FeatureSet::all;
  std::size_t sim_patients = 50;

  TrainOptions train;
  double train_ratio = 0.7;

  std::size_t synth_cases = 20;
  std::size_t exemplar_count = 3;
  std::size_t budget_factor = 5;
  std::string generator;
  std::string evaluator;

  std::size_t top_n = 5;
  bool page_level = false;

  /// Models selected for this run, in config order.
  std::vector<PredictorSpec> models;
  /// Every model declared in the config (generator/evaluator may sit outside
  /// the selection).
  std::vector<PredictorSpec> roster;

  /// Canonical effective configuration plus asset content hashes; contains
  /// no absolute paths, so the hash is location independent.
  nlohmann::json effective;
  std::string hash;

  const PredictorSpec& find_model(const std::string& id) const;
};

/// Parses the JSON config, applies CLI overrides, and resolves paths relative
/// to the config file. Replay/remote caches default to `<out>/cache/<model>.jsonl`.
/// Throws ConfigError.
PipelineConfig load_config(const std::filesystem::path& path, const CliOverrides& overrides,
                           const std::filesystem::path& out_dir);

class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::filesystem::path out_dir, bool force = false);

  static const std::vector<std::string>& stages();

  /// Runs one stage, skipping it when inputs, config, and outputs are
  /// unchanged since the manifest entry was written.
  void run(const std::string& stage);
  void run_all();

  /// Progress sink; defaults to stderr.
  std::function<void(const std::string&)> log;

  const std::filesystem::path& out_dir() const { return out_; }

 private:
  std::vector<std::string> stage_inputs(const std::string& stage) const;
  std::vector<std::string> execute(const std::string& stage);

  std::vector<std::string> ingest();
  std::vector<std::string> rollout();
  std::vector<std::string> proxy_build();
  std::vector<std::string> proxy_score();
  std::vector<std::string> fidelity();
  std::vector<std::string> features();
  std::vector<std::string> train_stage();
  std::vector<std::string> evaluate_stage();
  std::vector<std::string> cluster();
  std::vector<std::string> errors();
  std::vector<std::string> report();

  std::filesystem::path artifact(const std::string& name) const { return out_ / name; }
  /// Existence and manifest-hash check for an input artifact.
  void require(const std::string& name) const;
  std::unique_ptr<Predictor> predictor(const PredictorSpec& spec) const;

  nlohmann::json load_manifest() const;
  void save_manifest(const nlohmann::json& m) const;

  PipelineConfig cfg_;
  std::filesystem::path out_;
  bool force_;
  GuidelineGraph graph_;
  PromptSet prompts_;
};

/// SHA-256 over "blob <size>\0<content>", the git object-hash layout.
std::string content_digest(const std::string& content);

/// Splits a comma-separated model list, dropping blanks.
std::vector<std::string> split_models_arg(const std::string& s);

/// Which stage writes `artifact` (relative name), or empty if none.
std::string producing_stage(const std::string& artifact);

}  // namespace guidebench
