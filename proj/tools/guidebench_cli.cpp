// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Batch front end: one subcommand per pipeline stage, plus `simulate` which
// runs every stage offline with simulated predictors.

#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "guidebench/chat_client.hpp"
#include "guidebench/pipeline.hpp"

namespace gb = guidebench;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kConfigError = 2;
constexpr int kArtifactError = 3;
constexpr int kBackendError = 4;

struct Options {
  std::string config;
  std::string out = "out";
  std::optional<gb::Seed> seed;
  std::optional<std::string> backend;
  std::optional<std::size_t> k;
  std::optional<double> delta;
  std::optional<std::string> feature_set;
  std::optional<std::string> models;
  bool force = false;
  bool quiet = false;
};

int run(const std::string& command, const Options& o) {
  gb::CliOverrides ov;
  ov.seed = o.seed;
  ov.backend = command == "simulate" ? std::optional<std::string>("simulated") : o.backend;
  ov.k = o.k;
  ov.delta = o.delta;
  ov.feature_set = o.feature_set;
  if (o.models) ov.models = gb::split_models_arg(*o.models);

  auto cfg = gb::load_config(o.config, ov, o.out);
  gb::Pipeline pipeline(std::move(cfg), o.out, o.force);
  if (o.quiet) pipeline.log = [](const std::string&) {};
  if (command == "simulate") {
    pipeline.run_all();
  } else {
    pipeline.run(command);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"guidebench: proxy benchmarks and correctness scoring for guideline path prediction"};
  app.require_subcommand(1, 1);

  Options o;
  app.add_option("--config", o.config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--out", o.out, "Artifact directory")->capture_default_str();
  app.add_option("--seed", o.seed, "Root seed");
  app.add_option("--backend", o.backend, "Override every model's backend")
      ->check(CLI::IsMember({"remote", "replay", "simulated"}));
  app.add_option("--k", o.k, "Rollouts per patient")->check(CLI::PositiveNumber);
  app.add_option("--delta", o.delta, "Self-consistency acceptance threshold")->check(CLI::Range(0.0, 1.0));
  app.add_option("--feature-set", o.feature_set, "Base, Internal, Aggregated_only, Base_aggregated or All");
  app.add_option("--models", o.models, "Comma-separated subset of configured models");
  app.add_flag("--force", o.force, "Rerun stages even when up to date");
  app.add_flag("-q,--quiet", o.quiet, "Suppress progress output");

  const char* commands[][2] = {
      {"ingest", "Validate and copy the annotated cohort (or simulate one)"},
      {"rollout", "Sample k path predictions per model and patient"},
      {"proxy-build", "Build self, cross-model and synthetic proxy benchmarks"},
      {"proxy-score", "Score every model on every proxy benchmark"},
      {"fidelity", "Compare proxy rankings against true scores"},
      {"features", "Extract meta-classifier features"},
      {"train", "Fit the meta-classifier on the training split"},
      {"evaluate", "ROC, AUROC and F1 on the held-out split"},
      {"cluster", "Unsupervised two-cluster separation of predictions"},
      {"errors", "Mine points of confusion"},
      {"simulate", "Run the whole pipeline with simulated predictors"},
      {"report", "Assemble report.json and report.svg"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, o);
  } catch (const gb::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const gb::ArtifactError& e) {
    std::cerr << "artifact error: " << e.what() << "\n";
    return kArtifactError;
  } catch (const gb::BackendError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return kBackendError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
