// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidebench/prompt.hpp"

#include <algorithm>
#include <stdexcept>

#include "guidebench/digest.hpp"

namespace guidebench {
namespace {

bool is_name_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

/// Calls `fn(begin, end, name)` for every `{name}` occurrence.
template <typename Fn>
void scan_placeholders(const std::string& text, Fn&& fn) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < text.size() && is_name_char(text[j])) ++j;
    if (j > i + 1 && j < text.size() && text[j] == '}') {
      fn(i, j + 1, text.substr(i + 1, j - i - 1));
      i = j;
    }
  }
}

void require(const PromptTemplate& t, const std::string& role,
             std::initializer_list<const char*> names) {
  const auto have = t.placeholders();
  for (const char* n : names) {
    if (std::find(have.begin(), have.end(), n) == have.end())
      throw std::invalid_argument("prompt '" + role + "' lacks placeholder {" + n + "}");
  }
}

}  // namespace

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  return PromptTemplate(read_file(path));
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
  std::string out;
  std::size_t last = 0;
  scan_placeholders(text_, [&](std::size_t b, std::size_t e, const std::string& name) {
    auto it = values.find(name);
    if (it == values.end()) throw std::invalid_argument("no value for placeholder {" + name + "}");
    out.append(text_, last, b - last);
    out += it->second;
    last = e;
  });
  out.append(text_, last, std::string::npos);
  return out;
}

std::vector<std::string> PromptTemplate::placeholders() const {
  std::vector<std::string> names;
  scan_placeholders(text_, [&](std::size_t, std::size_t, const std::string& name) {
    if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
  });
  return names;
}

PromptSet PromptSet::load(const std::filesystem::path& dir) {
  PromptSet set;
  set.predict_path = PromptTemplate::load(dir / "predict_path.txt");
  set.fill_structured = PromptTemplate::load(dir / "fill_structured.txt");
  set.reconstruct_path = PromptTemplate::load(dir / "reconstruct_path.txt");
  set.write_note = PromptTemplate::load(dir / "write_note.txt");
  set.choose_preference = PromptTemplate::load(dir / "choose_preference.txt");
  require(set.predict_path, "predict_path", {"graph", "note"});
  require(set.fill_structured, "fill_structured", {"graph", "path"});
  require(set.reconstruct_path, "reconstruct_path", {"graph", "fields"});
  require(set.write_note, "write_note", {"graph", "path", "exemplars"});
  require(set.choose_preference, "choose_preference", {"note", "option_a", "option_b"});
  return set;
}

std::string PromptSet::graph_text(const GuidelineGraph& graph) const {
  return graph_format == GraphFormat::json ? graph.to_json().dump(1) : graph_outline(graph);
}

}  // namespace guidebench
