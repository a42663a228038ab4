// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "guidebench/random.hpp"

namespace guidebench {

/// Page-node identifier such as "NSCL-2-1": page "NSCL-2", ordinal 1.
///
/// Grammar: one or more hyphen-joined page components of uppercase letters and
/// digits, then a final hyphen and a positive ordinal without leading zeros.
struct NodeRef {
  std::string page_id;
  int node_ord = 0;

  std::string render() const;

  /// Throws std::invalid_argument when `text` is not a node identifier.
  static NodeRef parse(std::string_view text);
  static std::optional<NodeRef> try_parse(std::string_view text);

  friend bool operator==(const NodeRef&, const NodeRef&) = default;
  friend auto operator<=>(const NodeRef&, const NodeRef&) = default;
};

struct NodeRefHash {
  std::size_t operator()(const NodeRef& r) const noexcept;
};

/// Orders by rendered identifier ("NSCL-10-1" < "NSCL-2-1"). Used wherever a
/// tie needs breaking deterministically.
bool rendered_less(const NodeRef& a, const NodeRef& b);

enum class NodeKind { decision, recommendation };

struct GuidelineNode {
  NodeRef ref;
  std::string label;
  NodeKind kind = NodeKind::decision;
  std::vector<NodeRef> children;
  std::optional<std::string> treatment;
};

class GraphError : public std::runtime_error {
 public:
  enum class Kind { schema, dangling_edge, cycle, unreachable };

  GraphError(Kind kind, std::string subject, const std::string& what)
      : std::runtime_error(what), kind_(kind), subject_(std::move(subject)) {}

  Kind kind() const { return kind_; }
  /// Offending field, node, or cycle member.
  const std::string& subject() const { return subject_; }

 private:
  Kind kind_;
  std::string subject_;
};

class PathError : public std::runtime_error {
 public:
  enum class Kind { empty, malformed_token, duplicate_node };

  PathError(Kind kind, std::string token, std::size_t position, const std::string& what)
      : std::runtime_error(what), kind_(kind), token_(std::move(token)), position_(position) {}

  Kind kind() const { return kind_; }
  const std::string& token() const { return token_; }
  /// Zero-based token index within the path string.
  std::size_t position() const { return position_; }

 private:
  Kind kind_;
  std::string token_;
  std::size_t position_;
};

/// Ordered, duplicate-free node sequence. An empty path stands in for a
/// prediction that could not be parsed; it has no node set and no final node.
class GuidelinePath {
 public:
  GuidelinePath() = default;
  /// Throws PathError(duplicate_node) if a node repeats.
  explicit GuidelinePath(std::vector<NodeRef> nodes, bool terminal_reached = false);

  const std::vector<NodeRef>& nodes() const { return nodes_; }
  bool empty() const { return nodes_.empty(); }
  std::size_t size() const { return nodes_.size(); }
  const NodeRef& back() const { return nodes_.back(); }
  bool terminal_reached() const { return terminal_reached_; }

  /// Canonical form: identifiers joined by " → ".
  std::string render() const;

  /// Equality is over the node sequence; the terminal flag is derived data.
  friend bool operator==(const GuidelinePath& a, const GuidelinePath& b) {
    return a.nodes_ == b.nodes_;
  }

 private:
  std::vector<NodeRef> nodes_;
  bool terminal_reached_ = false;
};

class GuidelineGraph {
 public:
  /// Validates schema, edges, acyclicity, and reachability. Throws GraphError.
  static GuidelineGraph from_json(const nlohmann::json& doc);

  const GuidelineNode* find(const NodeRef& ref) const;
  /// Throws std::out_of_range for unknown refs.
  const GuidelineNode& at(const NodeRef& ref) const;
  bool contains(const NodeRef& ref) const { return find(ref) != nullptr; }
  bool has_edge(const NodeRef& from, const NodeRef& to) const;

  const std::vector<NodeRef>& roots() const { return roots_; }
  const std::map<std::string, std::vector<GuidelineNode>>& pages() const { return pages_; }
  std::size_t node_count() const { return index_.size(); }
  std::size_t recommendation_count() const;

  nlohmann::json to_json() const;

 private:
  std::map<std::string, std::vector<GuidelineNode>> pages_;
  std::vector<NodeRef> roots_;
  std::unordered_map<NodeRef, std::pair<std::string, std::size_t>, NodeRefHash> index_;
};

GuidelineGraph parse_graph(std::string_view document);
GuidelineGraph load_graph(const std::filesystem::path& path);

/// Splits on "→", "->" or "=>", trims whitespace, and parses each token.
/// Throws PathError on empty input, malformed tokens, or repeated nodes.
GuidelinePath parse_path_string(std::string_view text);

/// Same as above, with terminal_reached resolved against `graph`.
GuidelinePath parse_path_string(std::string_view text, const GuidelineGraph& graph);

/// Returns `path` with terminal_reached set from the last node's kind.
GuidelinePath resolve_terminal(const GuidelinePath& path, const GuidelineGraph& graph);

struct PathReport {
  std::vector<NodeRef> unknown_nodes;
  /// Consecutive pairs that are not parent→child edges (strict mode only).
  std::vector<std::pair<NodeRef, NodeRef>> non_edges;
  bool terminal_reached = false;

  bool ok() const { return unknown_nodes.empty() && non_edges.empty(); }
};

PathReport validate_path(const GuidelinePath& path, const GuidelineGraph& graph,
                         bool strict_edges = false);

/// Uniform root, then uniform child at each decision, until a recommendation.
GuidelinePath sample_random_path(const GuidelineGraph& graph, Seed seed);

/// Extends `prefix` by uniform child choices until a recommendation node.
GuidelinePath random_walk(const GuidelineGraph& graph, std::vector<NodeRef> prefix, Rng& rng);

/// A path that follows `path` up to a uniformly chosen interior node with an
/// alternative child, takes a different child there, then walks to a
/// recommendation. nullopt if no node on `path` offers an alternative.
std::optional<GuidelinePath> branch_path(const GuidelineGraph& graph, const GuidelinePath& path,
                                         Rng& rng);

struct ExtractedPath {
  std::optional<GuidelinePath> path;
  std::string error;
};

/// Pulls the final answer out of free-form model output: the last maximal
/// arrow-separated run of node identifiers. Runs containing at least one
/// arrow win over lone identifiers mentioned later in prose.
ExtractedPath extract_last_path(std::string_view raw_text);

/// Renders the graph as an indented outline for compact prompting.
std::string graph_outline(const GuidelineGraph& graph);

}  // namespace guidebench
