// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "guidebench/predictor.hpp"
#include "guidebench/pseudo_label.hpp"
#include "guidebench/stats.hpp"

namespace guidebench {

enum class FeatureSet { base, internal, aggregated_only, base_aggregated, all };

std::string to_string(FeatureSet s);
/// Accepts "Base", "Internal", "Aggregated_only", "Base_aggregated", "All",
/// case-insensitively, plus the short forms "agg" and "base+agg".
FeatureSet feature_set_from_string(const std::string& s);

/// Stable column order of the full feature vector.
inline constexpr std::array<const char*, 10> kFeatureColumns = {
    "self_path_overlap",     "self_treatment_match",  "synth_structured",     "synth_unstructured",
    "cons_self_overlap",     "cons_self_treatment",   "cons_cross_overlap",   "cons_cross_treatment",
    "cross_path_agreement",  "cross_treatment_agreement",
};

/// Indices into kFeatureColumns included by `set`.
std::vector<std::size_t> feature_indices(FeatureSet set);
std::vector<std::string> feature_columns(FeatureSet set);

/// Columns used for label-free clustering: per-sample self and cross
/// consistency.
inline constexpr std::array<std::size_t, 4> kConsistencyColumns = {0, 1, 8, 9};

struct FeatureRow {
  std::string model_id;
  std::string patient_id;
  /// NaN for groups the table was not built with.
  std::array<double, kFeatureColumns.size()> values{};
  /// 1 if the mode final node equals the annotated final node.
  std::optional<int> label;
};

struct FeatureTable {
  FeatureSet feature_set = FeatureSet::all;
  std::vector<FeatureRow> rows;

  Eigen::MatrixXd matrix() const;
  Eigen::MatrixXd matrix(std::span<const std::size_t> columns) const;
  /// Throws if any row lacks a label.
  std::vector<int> labels() const;
  FeatureTable subset(std::span<const std::size_t> row_indices) const;
};

/// Model-level proxy scores keyed by model then method.
using BenchScores = std::map<std::string, std::map<ProxyMethod, double>>;

/// One row per (model, patient). Throws std::invalid_argument when a model
/// lacks rollouts for some patient or a needed benchmark score is missing.
FeatureTable extract_features(std::span<const RolloutSet> rollouts, std::span<const PatientCase> cases,
                              const BenchScores& bench_scores, FeatureSet set);

void write_feature_csv(const std::filesystem::path& path, const FeatureTable& table);
FeatureTable load_feature_csv(const std::filesystem::path& path);

struct Split {
  std::vector<std::string> train_patients;
  std::vector<std::string> test_patients;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

/// Patient-level partition: unique ids sorted, shuffled by seed, first
/// round(ratio * n) go to train.
Split stratified_split(const FeatureTable& table, double ratio, Seed seed);

/// Class-weighted, L2-regularized mean logistic loss over standardized
/// features. theta = [w; b]; the bias is not penalized.
class LogisticObjective {
 public:
  LogisticObjective(Eigen::MatrixXd z, Eigen::VectorXd y, Eigen::VectorXd sample_weights, double C);

  double value(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& theta) const;
  Eigen::Index dim() const { return z_.cols() + 1; }

 private:
  Eigen::VectorXd margins(const Eigen::VectorXd& theta) const;

  Eigen::MatrixXd z_;
  Eigen::VectorXd y_;
  Eigen::VectorXd s_;
  double C_;
};

struct TrainOptions {
  double C = 0.1;
  int max_iter = 10000;
  double tolerance = 1e-6;
  Seed seed = 0;
};

struct TrainedClassifier {
  FeatureSet feature_set = FeatureSet::all;
  std::vector<std::string> columns;
  Eigen::VectorXd weights;
  double bias = 0.0;
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  /// Zero-variance training columns; their standardized value is 0.
  std::vector<bool> constant;
  double C = 0.1;
  std::array<double, 2> class_weights{1.0, 1.0};
  Seed seed = 0;
  int iterations = 0;
  double gradient_norm = 0.0;
  double loss = 0.0;

  Eigen::MatrixXd standardize(const Eigen::MatrixXd& x) const;
  nlohmann::json to_json() const;
  static TrainedClassifier from_json(const nlohmann::json& j);
};

/// Class weights n / (2 n_c). Newton's method with backtracking until the
/// gradient norm is at most options.tolerance or max_iter is reached.
TrainedClassifier train(const Eigen::MatrixXd& x, std::span<const int> y, FeatureSet set,
                        const TrainOptions& options = {});

/// Objective at the given training data, standardized as `clf` would.
LogisticObjective training_objective(const TrainedClassifier& clf, const Eigen::MatrixXd& x, std::span<const int> y);

Eigen::VectorXd predict_proba(const TrainedClassifier& clf, const Eigen::MatrixXd& x);

struct Evaluation {
  double auroc = 0.0;
  RocCurve roc;
  double f1 = 0.0;
  ConfusionMatrix confusion;
};

Evaluation evaluate(const TrainedClassifier& clf, const Eigen::MatrixXd& x, std::span<const int> y);

}  // namespace guidebench
