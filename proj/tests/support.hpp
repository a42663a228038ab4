// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Test fixtures and brute-force oracles. The oracles deliberately avoid the
// library's own helpers so agreement means something.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "guidebench/graph.hpp"
#include "guidebench/predictor.hpp"
#include "guidebench/prompt.hpp"
#include "guidebench/random.hpp"

namespace gbtest {

using namespace guidebench;

inline std::filesystem::path asset(const std::string& rel) { return std::filesystem::path(GUIDEBENCH_ASSET_DIR) / rel; }
inline std::filesystem::path fixture(const std::string& rel) {
  return std::filesystem::path(GUIDEBENCH_FIXTURE_DIR) / rel;
}

inline const GuidelineGraph& toy_graph() {
  static const GuidelineGraph g = load_graph(asset("toy_guideline.json"));
  return g;
}
inline const GuidelineGraph& wide_graph() {
  static const GuidelineGraph g = load_graph(asset("wide_guideline.json"));
  return g;
}
inline const PromptSet& prompts() {
  static const PromptSet p = PromptSet::load(asset("prompts"));
  return p;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("guidebench-" + tag + "-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline NodeRef universe_node(std::size_t i) { return NodeRef{"U-1", static_cast<int>(i + 1)}; }

/// Random duplicate-free node sequence over a `universe`-node alphabet; empty
/// with probability `p_empty` (stands in for an unparseable rollout).
inline GuidelinePath random_path(Rng& rng, std::size_t universe, double p_empty = 0.1) {
  if (rng.uniform01() < p_empty) return {};
  std::vector<std::size_t> ids(universe);
  for (std::size_t i = 0; i < universe; ++i) ids[i] = i;
  for (std::size_t i = universe - 1; i > 0; --i) std::swap(ids[i], ids[rng.index(i + 1)]);
  const std::size_t len = 1 + rng.index(std::min<std::size_t>(universe, 6));
  std::vector<NodeRef> nodes;
  for (std::size_t i = 0; i < len; ++i) nodes.push_back(universe_node(ids[i]));
  return GuidelinePath(std::move(nodes));
}

/// |∩| / |∪| by counting how many paths contain each node.
inline double oracle_overlap(const std::vector<GuidelinePath>& paths) {
  std::map<std::string, std::size_t> count;
  for (const auto& p : paths) {
    std::set<std::string> seen;
    for (const auto& n : p.nodes()) seen.insert(n.render());
    for (const auto& s : seen) ++count[s];
  }
  if (count.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& [_, c] : count) inter += c == paths.size();
  return static_cast<double>(inter) / static_cast<double>(count.size());
}

inline double oracle_treatment_consistency(const std::vector<GuidelinePath>& paths) {
  std::size_t best = 0;
  for (const auto& p : paths) {
    if (p.empty()) continue;
    std::size_t c = 0;
    for (const auto& q : paths) c += !q.empty() && q.back() == p.back();
    best = std::max(best, c);
  }
  return static_cast<double>(best) / static_cast<double>(paths.size());
}

/// Fraction of (positive, negative) pairs ranked correctly, ties count half.
inline double oracle_auroc(const std::vector<double>& s, const std::vector<int>& y) {
  double good = 0;
  double pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1;
      good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return good / pairs;
}

/// 1 - 6 Σd² / (n(n²-1)); valid for tie-free inputs only.
inline double oracle_spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  auto rank = [n](const std::vector<double>& v) {
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t below = 0;
      for (std::size_t j = 0; j < n; ++j) below += v[j] < v[i];
      r[i] = static_cast<double>(below + 1);
    }
    return r;
  };
  const auto ra = rank(a), rb = rank(b);
  double d2 = 0;
  for (std::size_t i = 0; i < n; ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  const double nn = static_cast<double>(n);
  return 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0));
}

inline double oracle_rmse(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

/// Exact two-sided binomial test p-value for `x` successes out of `n` at p = 0.5.
inline double binomial_two_sided(std::size_t x, std::size_t n) {
  auto logpmf = [n](std::size_t k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - static_cast<double>(n) * std::log(2.0);
  };
  const double px = logpmf(x);
  double p = 0;
  for (std::size_t k = 0; k <= n; ++k)
    if (logpmf(k) <= px + 1e-9) p += std::exp(logpmf(k));
  return std::min(1.0, p);
}

/// Rollout set built directly from paths (no predictor involved).
inline RolloutSet make_set(const std::string& model, const std::string& patient,
                           const std::vector<GuidelinePath>& paths) {
  RolloutSet s{model, patient, {}};
  for (std::size_t i = 0; i < paths.size(); ++i) {
    Rollout r;
    r.index = i;
    r.raw_text = paths[i].empty() ? "no answer" : "Final path: " + paths[i].render();
    if (!paths[i].empty()) r.parsed = paths[i];
    else r.parse_error = "no node identifiers in output";
    s.rollouts.push_back(std::move(r));
  }
  return s;
}

inline GuidelinePath P(const std::string& text) { return parse_path_string(text); }

}  // namespace gbtest
