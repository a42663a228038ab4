// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidebench/graph.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <sstream>
#include <unordered_set>

#include "guidebench/digest.hpp"

namespace guidebench {
namespace {

constexpr std::string_view kArrow = "\xE2\x86\x92";  // →
constexpr std::string_view kWhitespace = " \t\r\n\v\f";

bool is_page_char(char c) { return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9'); }

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(kWhitespace);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(kWhitespace);
  return s.substr(b, e - b + 1);
}

/// Length of the separator starting at `pos`, or 0.
std::size_t separator_at(std::string_view text, std::size_t pos) {
  for (std::string_view sep : {kArrow, std::string_view("->"), std::string_view("=>")}) {
    if (text.substr(pos, sep.size()) == sep) return sep.size();
  }
  return 0;
}

bool is_separator(std::string_view gap) {
  gap = trim(gap);
  return gap == kArrow || gap == "->" || gap == "=>";
}

std::string kind_name(NodeKind k) { return k == NodeKind::decision ? "decision" : "recommendation"; }

GraphError schema_error(const std::string& subject, const std::string& what) {
  return GraphError(GraphError::Kind::schema, subject, "guideline schema: " + what);
}

}  // namespace

std::string NodeRef::render() const { return page_id + "-" + std::to_string(node_ord); }

std::optional<NodeRef> NodeRef::try_parse(std::string_view text) {
  const auto last_dash = text.rfind('-');
  if (last_dash == std::string_view::npos || last_dash == 0) return std::nullopt;
  const auto page = text.substr(0, last_dash);
  const auto ord = text.substr(last_dash + 1);
  if (ord.empty() || ord.size() > 9 || ord.front() == '0') return std::nullopt;
  if (!std::all_of(ord.begin(), ord.end(), [](char c) { return c >= '0' && c <= '9'; }))
    return std::nullopt;
  // Page: components of [A-Z0-9]+ joined by single hyphens.
  bool prev_dash = true;
  for (char c : page) {
    if (c == '-') {
      if (prev_dash) return std::nullopt;
      prev_dash = true;
    } else if (is_page_char(c)) {
      prev_dash = false;
    } else {
      return std::nullopt;
    }
  }
  if (prev_dash) return std::nullopt;
  return NodeRef{std::string(page), std::stoi(std::string(ord))};
}

NodeRef NodeRef::parse(std::string_view text) {
  if (auto r = try_parse(text)) return *r;
  throw std::invalid_argument("not a node identifier: '" + std::string(text) + "'");
}

std::size_t NodeRefHash::operator()(const NodeRef& r) const noexcept {
  return std::hash<std::string>{}(r.page_id) * 31u + static_cast<std::size_t>(r.node_ord);
}

bool rendered_less(const NodeRef& a, const NodeRef& b) { return a.render() < b.render(); }

// ---------------------------------------------------------------------------
// GuidelinePath

GuidelinePath::GuidelinePath(std::vector<NodeRef> nodes, bool terminal_reached)
    : nodes_(std::move(nodes)), terminal_reached_(terminal_reached) {
  std::unordered_set<NodeRef, NodeRefHash> seen;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!seen.insert(nodes_[i]).second) {
      const auto id = nodes_[i].render();
      throw PathError(PathError::Kind::duplicate_node, id, i,
                      "duplicate node " + id + " at position " + std::to_string(i));
    }
  }
}

std::string GuidelinePath::render() const {
  std::string out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (i) {
      out += ' ';
      out += kArrow;
      out += ' ';
    }
    out += nodes_[i].render();
  }
  return out;
}

// ---------------------------------------------------------------------------
// GuidelineGraph

GuidelineGraph GuidelineGraph::from_json(const nlohmann::json& doc) {
  GuidelineGraph g;
  if (!doc.is_object()) throw schema_error("", "document must be an object");
  if (!doc.contains("pages") || !doc["pages"].is_object())
    throw schema_error("pages", "missing object field 'pages'");
  if (!doc.contains("roots") || !doc["roots"].is_array())
    throw schema_error("roots", "missing array field 'roots'");

  auto parse_ref = [](const nlohmann::json& v, const std::string& where) {
    if (!v.is_string()) throw schema_error(where, where + " must be a string node id");
    auto r = NodeRef::try_parse(v.get<std::string>());
    if (!r) throw schema_error(where, "malformed node id '" + v.get<std::string>() + "' in " + where);
    return *r;
  };

  for (const auto& [page_id, nodes] : doc["pages"].items()) {
    if (!nodes.is_array()) throw schema_error(page_id, "page " + page_id + " must be an array");
    auto& list = g.pages_[page_id];
    for (const auto& n : nodes) {
      if (!n.is_object()) throw schema_error(page_id, "node entries must be objects");
      for (const char* field : {"id", "label", "kind"}) {
        if (!n.contains(field) || !n[field].is_string())
          throw schema_error(field, std::string("node in page ") + page_id +
                                        " missing string field '" + field + "'");
      }
      GuidelineNode node;
      node.ref = parse_ref(n["id"], "id");
      const auto id = node.ref.render();
      if (node.ref.page_id != page_id)
        throw schema_error(id, "node " + id + " listed under page " + page_id);
      node.label = n["label"].get<std::string>();
      const auto kind = n["kind"].get<std::string>();
      if (kind == "decision") {
        node.kind = NodeKind::decision;
      } else if (kind == "recommendation") {
        node.kind = NodeKind::recommendation;
      } else {
        throw schema_error(id, "node " + id + " has unknown kind '" + kind + "'");
      }
      if (n.contains("children")) {
        if (!n["children"].is_array())
          throw schema_error(id, "node " + id + " children must be an array");
        for (const auto& c : n["children"]) node.children.push_back(parse_ref(c, "children"));
      }
      if (n.contains("treatment") && !n["treatment"].is_null()) {
        if (!n["treatment"].is_string())
          throw schema_error(id, "node " + id + " treatment must be a string");
        node.treatment = n["treatment"].get<std::string>();
      }
      if (node.kind == NodeKind::recommendation) {
        if (!node.children.empty())
          throw schema_error(id, "recommendation node " + id + " must not have children");
        if (!node.treatment)
          throw schema_error(id, "recommendation node " + id + " requires 'treatment'");
      } else if (node.children.empty()) {
        throw schema_error(id, "decision node " + id + " requires children");
      }
      if (g.index_.count(node.ref)) throw schema_error(id, "duplicate node id " + id);
      g.index_.emplace(node.ref, std::make_pair(page_id, list.size()));
      list.push_back(std::move(node));
    }
  }

  for (const auto& r : doc["roots"]) g.roots_.push_back(parse_ref(r, "roots"));
  if (g.roots_.empty()) throw schema_error("roots", "at least one root is required");

  for (const auto& [page_id, list] : g.pages_) {
    for (const auto& node : list) {
      for (const auto& c : node.children) {
        if (!g.contains(c)) {
          throw GraphError(GraphError::Kind::dangling_edge, c.render(),
                           "dangling edge " + node.ref.render() + " -> " + c.render());
        }
      }
    }
  }
  for (const auto& r : g.roots_) {
    if (!g.contains(r))
      throw GraphError(GraphError::Kind::dangling_edge, r.render(),
                       "root " + r.render() + " is not defined");
  }

  // Cycle check: iterative three-colour DFS from every node.
  enum class Mark { fresh, open, done };
  std::unordered_map<NodeRef, Mark, NodeRefHash> mark;
  for (const auto& [ref, _] : g.index_) mark[ref] = Mark::fresh;
  std::vector<NodeRef> ordered;
  for (const auto& [_, list] : g.pages_)
    for (const auto& n : list) ordered.push_back(n.ref);
  for (const auto& start : ordered) {
    if (mark[start] != Mark::fresh) continue;
    std::vector<std::pair<NodeRef, std::size_t>> stack{{start, 0}};
    mark[start] = Mark::open;
    while (!stack.empty()) {
      auto& [ref, next] = stack.back();
      const auto& children = g.at(ref).children;
      if (next == children.size()) {
        mark[ref] = Mark::done;
        stack.pop_back();
        continue;
      }
      const NodeRef child = children[next++];
      if (mark[child] == Mark::open) {
        throw GraphError(GraphError::Kind::cycle, child.render(),
                         "cycle detected through " + child.render());
      }
      if (mark[child] == Mark::fresh) {
        mark[child] = Mark::open;
        stack.emplace_back(child, 0);
      }
    }
  }

  // Every root must reach a recommendation.
  std::unordered_map<NodeRef, bool, NodeRefHash> reaches;
  std::function<bool(const NodeRef&)> can_finish = [&](const NodeRef& r) {
    if (auto it = reaches.find(r); it != reaches.end()) return it->second;
    const auto& node = g.at(r);
    bool ok = node.kind == NodeKind::recommendation;
    for (const auto& c : node.children) ok = can_finish(c) || ok;
    reaches[r] = ok;
    return ok;
  };
  for (const auto& r : g.roots_) {
    if (!can_finish(r))
      throw GraphError(GraphError::Kind::unreachable, r.render(),
                       "no recommendation reachable from root " + r.render());
  }
  return g;
}

const GuidelineNode* GuidelineGraph::find(const NodeRef& ref) const {
  auto it = index_.find(ref);
  if (it == index_.end()) return nullptr;
  return &pages_.at(it->second.first)[it->second.second];
}

const GuidelineNode& GuidelineGraph::at(const NodeRef& ref) const {
  if (const auto* n = find(ref)) return *n;
  throw std::out_of_range("unknown node " + ref.render());
}

bool GuidelineGraph::has_edge(const NodeRef& from, const NodeRef& to) const {
  const auto* n = find(from);
  return n && std::find(n->children.begin(), n->children.end(), to) != n->children.end();
}

std::size_t GuidelineGraph::recommendation_count() const {
  std::size_t count = 0;
  for (const auto& [_, list] : pages_)
    for (const auto& n : list) count += n.kind == NodeKind::recommendation;
  return count;
}

nlohmann::json GuidelineGraph::to_json() const {
  nlohmann::json pages = nlohmann::json::object();
  for (const auto& [page_id, list] : pages_) {
    auto arr = nlohmann::json::array();
    for (const auto& n : list) {
      nlohmann::json j{{"id", n.ref.render()}, {"label", n.label}, {"kind", kind_name(n.kind)}};
      auto children = nlohmann::json::array();
      for (const auto& c : n.children) children.push_back(c.render());
      j["children"] = std::move(children);
      if (n.treatment) j["treatment"] = *n.treatment;
      arr.push_back(std::move(j));
    }
    pages[page_id] = std::move(arr);
  }
  auto roots = nlohmann::json::array();
  for (const auto& r : roots_) roots.push_back(r.render());
  return {{"pages", std::move(pages)}, {"roots", std::move(roots)}};
}

GuidelineGraph parse_graph(std::string_view document) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    throw schema_error("", std::string("invalid JSON: ") + e.what());
  }
  return GuidelineGraph::from_json(doc);
}

GuidelineGraph load_graph(const std::filesystem::path& path) {
  return parse_graph(read_file(path));
}

// ---------------------------------------------------------------------------
// Paths

GuidelinePath parse_path_string(std::string_view text) {
  if (trim(text).empty()) throw PathError(PathError::Kind::empty, "", 0, "empty path");
  std::vector<std::string_view> tokens;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size();) {
    if (const auto len = separator_at(text, i)) {
      tokens.push_back(text.substr(start, i - start));
      i += len;
      start = i;
    } else {
      ++i;
    }
  }
  tokens.push_back(text.substr(start));

  std::vector<NodeRef> nodes;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto tok = trim(tokens[i]);
    auto ref = NodeRef::try_parse(tok);
    if (!ref) {
      throw PathError(PathError::Kind::malformed_token, std::string(tok), i,
                      "malformed node '" + std::string(tok) + "' at position " +
                          std::to_string(i));
    }
    nodes.push_back(std::move(*ref));
  }
  return GuidelinePath(std::move(nodes));
}

GuidelinePath parse_path_string(std::string_view text, const GuidelineGraph& graph) {
  return resolve_terminal(parse_path_string(text), graph);
}

GuidelinePath resolve_terminal(const GuidelinePath& path, const GuidelineGraph& graph) {
  bool terminal = false;
  if (!path.empty()) {
    const auto* last = graph.find(path.back());
    terminal = last && last->kind == NodeKind::recommendation;
  }
  return GuidelinePath(path.nodes(), terminal);
}

PathReport validate_path(const GuidelinePath& path, const GuidelineGraph& graph,
                         bool strict_edges) {
  PathReport report;
  for (const auto& n : path.nodes())
    if (!graph.contains(n)) report.unknown_nodes.push_back(n);
  if (strict_edges) {
    const auto& ns = path.nodes();
    for (std::size_t i = 1; i < ns.size(); ++i)
      if (!graph.has_edge(ns[i - 1], ns[i])) report.non_edges.emplace_back(ns[i - 1], ns[i]);
  }
  report.terminal_reached = resolve_terminal(path, graph).terminal_reached();
  return report;
}

GuidelinePath random_walk(const GuidelineGraph& graph, std::vector<NodeRef> prefix, Rng& rng) {
  while (true) {
    const auto& node = graph.at(prefix.back());
    if (node.kind == NodeKind::recommendation) break;
    prefix.push_back(node.children[rng.index(node.children.size())]);
  }
  return GuidelinePath(std::move(prefix), true);
}

GuidelinePath sample_random_path(const GuidelineGraph& graph, Seed seed) {
  Rng rng(seed);
  const auto& roots = graph.roots();
  return random_walk(graph, {roots[rng.index(roots.size())]}, rng);
}

std::optional<GuidelinePath> branch_path(const GuidelineGraph& graph, const GuidelinePath& path,
                                         Rng& rng) {
  const auto& ns = path.nodes();
  std::vector<std::size_t> spots;
  for (std::size_t i = 0; i + 1 < ns.size(); ++i)
    if (graph.at(ns[i]).children.size() > 1) spots.push_back(i);
  if (spots.empty()) return std::nullopt;
  const auto at = spots[rng.index(spots.size())];
  std::vector<NodeRef> alternatives;
  for (const auto& c : graph.at(ns[at]).children)
    if (c != ns[at + 1]) alternatives.push_back(c);
  std::vector<NodeRef> prefix(ns.begin(), ns.begin() + static_cast<std::ptrdiff_t>(at) + 1);
  prefix.push_back(alternatives[rng.index(alternatives.size())]);
  return random_walk(graph, std::move(prefix), rng);
}

ExtractedPath extract_last_path(std::string_view raw) {
  struct Token {
    NodeRef ref;
    std::size_t begin, end;
  };
  std::vector<Token> ids;
  for (std::size_t i = 0; i < raw.size();) {
    const bool boundary =
        i == 0 || !(std::isalnum(static_cast<unsigned char>(raw[i - 1])) || raw[i - 1] == '_' ||
                    raw[i - 1] == '-');
    if (!boundary || !is_page_char(raw[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < raw.size() && (is_page_char(raw[j]) || raw[j] == '-')) ++j;
    std::size_t end = j;
    while (end > i && raw[end - 1] == '-') --end;
    const bool clean_tail = j == raw.size() || !std::isalnum(static_cast<unsigned char>(raw[j]));
    if (clean_tail) {
      if (auto ref = NodeRef::try_parse(raw.substr(i, end - i))) ids.push_back({*ref, i, end});
    }
    i = j;
  }
  if (ids.empty()) return {std::nullopt, "no node identifiers in output"};

  std::vector<std::pair<std::size_t, std::size_t>> runs;  // [first, last] into ids
  std::size_t first = 0;
  for (std::size_t k = 1; k <= ids.size(); ++k) {
    if (k == ids.size() || !is_separator(raw.substr(ids[k - 1].end, ids[k].begin - ids[k - 1].end))) {
      runs.emplace_back(first, k - 1);
      first = k;
    }
  }
  auto chosen = runs.back();
  for (auto it = runs.rbegin(); it != runs.rend(); ++it) {
    if (it->second > it->first) {
      chosen = *it;
      break;
    }
  }
  std::vector<NodeRef> nodes;
  for (std::size_t k = chosen.first; k <= chosen.second; ++k) nodes.push_back(ids[k].ref);
  try {
    return {GuidelinePath(std::move(nodes)), ""};
  } catch (const PathError& e) {
    return {std::nullopt, e.what()};
  }
}

std::string graph_outline(const GuidelineGraph& graph) {
  std::ostringstream out;
  out << "Roots:";
  for (const auto& r : graph.roots()) out << ' ' << r.render();
  out << '\n';
  for (const auto& [page_id, list] : graph.pages()) {
    out << "Page " << page_id << '\n';
    for (const auto& n : list) {
      out << "  " << n.ref.render() << " [" << kind_name(n.kind) << "] " << n.label;
      if (n.kind == NodeKind::decision) {
        out << " ->";
        for (const auto& c : n.children) out << ' ' << c.render();
      } else {
        out << " => " << *n.treatment;
      }
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace guidebench
