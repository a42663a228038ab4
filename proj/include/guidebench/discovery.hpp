// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "guidebench/predictor.hpp"
#include "guidebench/random.hpp"

namespace guidebench {

struct KMeansResult {
  Eigen::VectorXi assignment;
  Eigen::MatrixXd centroids;  // k x d
  double objective = 0.0;
  /// Objective after each Lloyd step of the winning restart.
  std::vector<double> trace;
  int restart = 0;
  int iterations = 0;
};

/// k-means++ seeding, Lloyd iterations to an assignment fixpoint or
/// max_iter, best of `restarts` (lowest objective, then lowest restart).
/// Throws std::invalid_argument on fewer than 2k rows or identical rows.
KMeansResult kmeans(const Eigen::MatrixXd& x, int k, Seed seed, int restarts = 10, int max_iter = 300);

struct Separation {
  KMeansResult clusters;
  /// Cluster mapped to "correct".
  int correct_cluster = 0;
  /// 1 = predicted correct.
  std::vector<int> predicted;
  /// F1 against truth, evaluation mode only.
  std::optional<double> f1;
};

/// Two clusters over consistency features. With `truth`, picks the mapping
/// that maximizes F1; without it, the cluster whose centroid has the higher
/// mean is "correct".
Separation kmeans_separate(const Eigen::MatrixXd& x, std::optional<std::span<const int>> truth, Seed seed);

struct ConfusionPoint {
  /// Node id, or page id when aggregated by page.
  std::string key;
  std::size_t divergence_count = 0;
  std::set<std::string> models_affected;
  std::vector<std::string> example_patient_ids;
};

/// Per patient, nodes present in some but not all parsed rollouts; counts
/// summed over patients and ranked by count, then key. Failed or
/// unparseable rollouts are skipped; patients with fewer than two usable
/// rollouts contribute nothing.
std::vector<ConfusionPoint> mine_confusion_points(std::span<const RolloutSet> sets, bool page_level = false,
                                                  std::size_t max_examples = 5);

struct ErrorInstance {
  std::string patient_id;
  NodeRef node;
};

/// Nodes in the symmetric difference of each patient's mode path and its
/// annotated path.
std::vector<ErrorInstance> human_error_nodes(std::span<const RolloutSet> model_sets, std::span<const PatientCase> cases);

/// Fraction of error instances whose node (or page) is among the first
/// `top_n` confusion points. nullopt when there are no error instances.
std::optional<double> error_coverage(std::span<const ConfusionPoint> ranked, std::span<const ErrorInstance> errors,
                                     std::size_t top_n = 5, bool page_level = false);

nlohmann::json confusion_report(std::span<const ConfusionPoint> ranked);

}  // namespace guidebench
