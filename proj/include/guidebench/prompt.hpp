// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "guidebench/graph.hpp"

namespace guidebench {

/// Text template with `{name}` placeholders (lowercase letters and '_').
class PromptTemplate {
 public:
  PromptTemplate() = default;
  explicit PromptTemplate(std::string text) : text_(std::move(text)) {}

  static PromptTemplate load(const std::filesystem::path& path);

  /// Substitutes every placeholder; throws std::invalid_argument if one has
  /// no value in `values`.
  std::string render(const std::map<std::string, std::string>& values) const;
  std::vector<std::string> placeholders() const;
  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

enum class GraphFormat { json, outline };

/// Prompt assets for every role a backend can be asked to play.
struct PromptSet {
  PromptTemplate predict_path;       // {graph} {note}
  PromptTemplate fill_structured;    // {graph} {path}
  PromptTemplate reconstruct_path;   // {graph} {fields}
  PromptTemplate write_note;         // {graph} {path} {fields} {exemplars}
  PromptTemplate choose_preference;  // {graph} {note} {option_a} {option_b}
  GraphFormat graph_format = GraphFormat::json;

  /// Loads `<dir>/<role>.txt` for each role and checks required placeholders.
  static PromptSet load(const std::filesystem::path& dir);

  std::string graph_text(const GuidelineGraph& graph) const;
};

}  // namespace guidebench
