// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidebench/metrics.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <unordered_set>

namespace guidebench {

std::string to_string(MetricKind m) {
  return m == MetricKind::path_overlap ? "path_overlap" : "treatment_match";
}

MetricKind metric_from_string(const std::string& s) {
  if (s == "path_overlap" || s == "overlap") return MetricKind::path_overlap;
  if (s == "treatment_match" || s == "treatment") return MetricKind::treatment_match;
  throw std::invalid_argument("unknown metric '" + s + "'");
}

MetricScore path_overlap(std::span<const GuidelinePath> paths) {
  if (paths.empty()) throw std::invalid_argument("path_overlap: empty collection");
  using NodeSet = std::unordered_set<NodeRef, NodeRefHash>;
  NodeSet uni;
  NodeSet inter(paths.front().nodes().begin(), paths.front().nodes().end());
  for (const auto& p : paths) {
    uni.insert(p.nodes().begin(), p.nodes().end());
    const NodeSet mine(p.nodes().begin(), p.nodes().end());
    std::erase_if(inter, [&](const NodeRef& r) { return !mine.count(r); });
  }
  const double value =
      uni.empty() ? 1.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
  return {value, MetricKind::path_overlap, paths.size()};
}

MetricScore treatment_match_gt(const GuidelinePath& prediction, const GuidelinePath& truth) {
  if (prediction.empty() || truth.empty())
    throw std::invalid_argument("treatment_match_gt: paths must be nonempty");
  return {prediction.back() == truth.back() ? 1.0 : 0.0, MetricKind::treatment_match, 1};
}

namespace {

std::map<std::string, std::size_t> final_counts(std::span<const GuidelinePath> paths) {
  std::map<std::string, std::size_t> counts;
  for (const auto& p : paths)
    if (!p.empty()) ++counts[p.back().render()];
  return counts;
}

/// std::map iterates keys ascending, so the first maximum is the smallest key.
template <typename Map>
typename Map::const_iterator first_max(const Map& m) {
  auto best = m.begin();
  for (auto it = m.begin(); it != m.end(); ++it)
    if (it->second > best->second) best = it;
  return best;
}

}  // namespace

MetricScore treatment_match_consistency(std::span<const GuidelinePath> paths) {
  if (paths.empty()) throw std::invalid_argument("treatment_match_consistency: empty collection");
  const auto counts = final_counts(paths);
  const std::size_t top = counts.empty() ? 0 : first_max(counts)->second;
  return {static_cast<double>(top) / static_cast<double>(paths.size()),
          MetricKind::treatment_match, paths.size()};
}

std::optional<NodeRef> mode_final_node(std::span<const GuidelinePath> paths) {
  const auto counts = final_counts(paths);
  if (counts.empty()) return std::nullopt;
  return NodeRef::parse(first_max(counts)->first);
}

std::string node_set_key(const GuidelinePath& path) {
  std::vector<std::string> ids;
  for (const auto& n : path.nodes()) ids.push_back(n.render());
  std::sort(ids.begin(), ids.end());
  std::string key;
  for (const auto& id : ids) {
    if (!key.empty()) key += '|';
    key += id;
  }
  return key;
}

std::optional<std::size_t> mode_path_index(std::span<const GuidelinePath> paths) {
  std::map<std::string, std::size_t> counts;
  for (const auto& p : paths)
    if (!p.empty()) ++counts[node_set_key(p)];
  if (counts.empty()) return std::nullopt;
  const auto& key = first_max(counts)->first;
  for (std::size_t i = 0; i < paths.size(); ++i)
    if (!paths[i].empty() && node_set_key(paths[i]) == key) return i;
  return std::nullopt;
}

std::optional<std::size_t> mode_treatment_index(std::span<const GuidelinePath> paths) {
  const auto mode = mode_final_node(paths);
  if (!mode) return std::nullopt;
  for (std::size_t i = 0; i < paths.size(); ++i)
    if (!paths[i].empty() && paths[i].back() == *mode) return i;
  return std::nullopt;
}

}  // namespace guidebench
