// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "guidebench/metrics.hpp"

namespace guidebench {

using VecRef = Eigen::Ref<const Eigen::VectorXd>;

inline Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

/// 1-based ranks; tied values share the mean of their positions.
Eigen::VectorXd average_ranks(const VecRef& x);

/// nullopt when either side has zero variance. Throws std::invalid_argument
/// on length mismatch or fewer than 2 values.
std::optional<double> pearson(const VecRef& a, const VecRef& b);
std::optional<double> spearman(const VecRef& a, const VecRef& b);

/// Throws on length mismatch or empty input.
double rmse(const VecRef& a, const VecRef& b);

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

struct RocCurve {
  /// From (0,0) at threshold +inf to (1,1) at the lowest score.
  std::vector<RocPoint> points;
  double auroc = 0.0;
};

/// Labels are 0/1. Sweeps unique thresholds high to low with ties grouped;
/// AUROC by the trapezoid rule. Throws if only one class is present.
RocCurve roc_curve(const VecRef& scores, std::span<const int> labels);

struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

ConfusionMatrix confusion_matrix(std::span<const int> pred, std::span<const int> truth);
/// 2TP / (2TP + FP + FN); 0 when that denominator is 0.
double f1_binary(std::span<const int> pred, std::span<const int> truth);

struct ModelScores {
  std::optional<double> true_score;
  std::map<std::string, double> proxy;
};

struct ModelScoreTable {
  MetricKind metric = MetricKind::treatment_match;
  std::map<std::string, ModelScores> rows;

  void set_true(const std::string& model, double v);
  void set_proxy(const std::string& model, const std::string& method, double v);
  std::vector<std::string> methods() const;
};

struct FidelityResult {
  std::string method;
  std::size_t n_models = 0;
  std::optional<double> spearman;
  double rmse = 0.0;
};

/// Per proxy method, Spearman and RMSE between model-level proxy and true
/// scores. Throws std::invalid_argument if a method has fewer than 2 models
/// with both scores.
std::vector<FidelityResult> benchmark_fidelity(const ModelScoreTable& table);

/// {metric: {method: {spearman, rmse, n_models}}}
nlohmann::json fidelity_report(std::span<const ModelScoreTable> tables);

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve);
std::string roc_svg(const RocCurve& curve, const std::string& title);

}  // namespace guidebench
