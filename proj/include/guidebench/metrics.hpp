// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "guidebench/graph.hpp"

namespace guidebench {

enum class MetricKind { path_overlap, treatment_match };

std::string to_string(MetricKind m);
/// Accepts "path_overlap"/"overlap" and "treatment_match"/"treatment".
MetricKind metric_from_string(const std::string& s);

/// A collection of k >= 1 paths, e.g. the rollouts of one model for one patient.
using PathCollection = std::vector<GuidelinePath>;

struct MetricScore {
  double value = 0.0;
  MetricKind metric = MetricKind::path_overlap;
  std::size_t k_used = 0;
};

/// Jaccard similarity of the node sets: |∩ V_i| / |∪ V_i|, and 1 when the
/// union is empty. Ignores node order and path order. Throws on k == 0.
MetricScore path_overlap(std::span<const GuidelinePath> paths);

/// 1 iff the two paths end at the same node. Both must be nonempty.
MetricScore treatment_match_gt(const GuidelinePath& prediction, const GuidelinePath& truth);

/// Frequency of the most common final node: max_t c(t) / k. Empty (failed)
/// paths count toward k but never toward c(t).
MetricScore treatment_match_consistency(std::span<const GuidelinePath> paths);

/// Most frequent final node, ties broken by the lexicographically smallest
/// rendered id. nullopt when every path is empty.
std::optional<NodeRef> mode_final_node(std::span<const GuidelinePath> paths);

/// Sorted, '|'-joined rendered ids: identifies a path's node set.
std::string node_set_key(const GuidelinePath& path);

/// Index of the first nonempty path whose node set is the most frequent one
/// (ties by smallest node_set_key). nullopt when every path is empty.
std::optional<std::size_t> mode_path_index(std::span<const GuidelinePath> paths);

/// Index of the first nonempty path ending at the modal final node.
std::optional<std::size_t> mode_treatment_index(std::span<const GuidelinePath> paths);

}  // namespace guidebench
