// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidebench/discovery.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <stdexcept>
#include <unordered_set>

#include "guidebench/metrics.hpp"
#include "guidebench/stats.hpp"

namespace guidebench {
namespace {

struct Lloyd {
  Eigen::VectorXi assignment;
  Eigen::MatrixXd centroids;
  double objective = 0;
  std::vector<double> trace;
  int iterations = 0;
};

// Assigns each row to its nearest centroid (lowest index on ties); returns
// the objective.
double assign(const Eigen::MatrixXd& x, const Eigen::MatrixXd& c, Eigen::VectorXi& a) {
  double total = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index best = 0;
    const double d = (c.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
    a[i] = static_cast<int>(best);
    total += d;
  }
  return total;
}

double objective(const Eigen::MatrixXd& x, const Eigen::MatrixXd& c, const Eigen::VectorXi& a) {
  double total = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) total += (x.row(i) - c.row(a[i])).squaredNorm();
  return total;
}

Eigen::MatrixXd seed_plus_plus(const Eigen::MatrixXd& x, int k, Rng& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  Eigen::MatrixXd c(k, x.cols());
  c.row(0) = x.row(static_cast<Eigen::Index>(rng.index(n)));
  Eigen::VectorXd d2 = (x.rowwise() - c.row(0)).rowwise().squaredNorm();
  for (int j = 1; j < k; ++j) {
    const double total = d2.sum();
    Eigen::Index pick = static_cast<Eigen::Index>(rng.index(n));
    if (total > 0) {
      double r = rng.uniform01() * total;
      for (pick = 0; pick + 1 < x.rows() && (r -= d2[pick]) >= 0; ++pick) {
      }
    }
    c.row(j) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - c.row(j)).rowwise().squaredNorm());
  }
  return c;
}

Lloyd run_lloyd(const Eigen::MatrixXd& x, Eigen::MatrixXd c, int max_iter) {
  Lloyd out;
  out.assignment = Eigen::VectorXi::Constant(x.rows(), -1);
  Eigen::VectorXi a(x.rows());
  for (int it = 0; it < max_iter; ++it) {
    assign(x, c, a);
    const bool changed = a != out.assignment;
    out.assignment = a;
    for (Eigen::Index j = 0; j < c.rows(); ++j) {
      Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(x.cols());
      int count = 0;
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (a[i] == j) {
          sum += x.row(i);
          ++count;
        }
      }
      if (count > 0) c.row(j) = sum / count;
    }
    out.trace.push_back(objective(x, c, a));
    out.iterations = it + 1;
    if (!changed) break;
  }
  out.centroids = std::move(c);
  out.objective = out.trace.back();
  return out;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& x, int k, Seed seed, int restarts, int max_iter) {
  if (k < 1) throw std::invalid_argument("kmeans: k must be positive");
  if (x.rows() < 2 * k) throw std::invalid_argument("kmeans: need at least 2k rows");
  if (!x.allFinite()) throw std::invalid_argument("kmeans: non-finite features");
  if (((x.rowwise() - x.row(0)).rowwise().squaredNorm().array() == 0).all())
    throw std::invalid_argument("kmeans: degenerate data (all rows identical)");

  KMeansResult best;
  best.objective = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, "kmeans", std::to_string(r)));
    auto run = run_lloyd(x, seed_plus_plus(x, k, rng), max_iter);
    if (run.objective < best.objective) {
      best.assignment = std::move(run.assignment);
      best.centroids = std::move(run.centroids);
      best.objective = run.objective;
      best.trace = std::move(run.trace);
      best.restart = r;
      best.iterations = run.iterations;
    }
  }
  return best;
}

Separation kmeans_separate(const Eigen::MatrixXd& x, std::optional<std::span<const int>> truth, Seed seed) {
  if (truth && truth->size() != static_cast<std::size_t>(x.rows()))
    throw std::invalid_argument("kmeans_separate: truth length mismatch");
  Separation s;
  s.clusters = kmeans(x, 2, seed);
  auto mapped = [&](int correct) {
    std::vector<int> p(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) p[static_cast<std::size_t>(i)] = s.clusters.assignment[i] == correct;
    return p;
  };
  if (truth) {
    const double f0 = f1_binary(mapped(0), *truth);
    const double f1 = f1_binary(mapped(1), *truth);
    s.correct_cluster = f1 > f0 ? 1 : 0;
    s.f1 = std::max(f0, f1);
  } else {
    const auto& c = s.clusters.centroids;
    s.correct_cluster = c.row(1).mean() > c.row(0).mean() ? 1 : 0;
  }
  s.predicted = mapped(s.correct_cluster);
  return s;
}

std::vector<ConfusionPoint> mine_confusion_points(std::span<const RolloutSet> sets, bool page_level,
                                                  std::size_t max_examples) {
  std::map<std::string, ConfusionPoint> points;
  for (const auto& set : sets) {
    std::vector<std::set<std::string>> members;
    for (const auto& r : set.rollouts) {
      if (r.failed() || !r.parsed || r.parsed->empty()) continue;
      std::set<std::string> keys;
      for (const auto& n : r.parsed->nodes()) keys.insert(page_level ? n.page_id : n.render());
      members.push_back(std::move(keys));
    }
    if (members.size() < 2) continue;
    std::set<std::string> uni;
    for (const auto& m : members) uni.insert(m.begin(), m.end());
    for (const auto& key : uni) {
      const bool everywhere = std::all_of(members.begin(), members.end(), [&](const auto& m) { return m.count(key); });
      if (everywhere) continue;
      auto& p = points[key];
      p.key = key;
      ++p.divergence_count;
      p.models_affected.insert(set.model_id);
      if (p.example_patient_ids.size() < max_examples &&
          std::find(p.example_patient_ids.begin(), p.example_patient_ids.end(), set.patient_id) ==
              p.example_patient_ids.end())
        p.example_patient_ids.push_back(set.patient_id);
    }
  }
  std::vector<ConfusionPoint> ranked;
  for (auto& [_, p] : points) ranked.push_back(std::move(p));
  std::stable_sort(ranked.begin(), ranked.end(), [](const ConfusionPoint& a, const ConfusionPoint& b) {
    return a.divergence_count > b.divergence_count;
  });
  return ranked;
}

std::vector<ErrorInstance> human_error_nodes(std::span<const RolloutSet> model_sets, std::span<const PatientCase> cases) {
  std::map<std::string, const PatientCase*> truth;
  for (const auto& c : cases)
    if (c.annotated_path && !c.annotated_path->empty()) truth[c.patient_id] = &c;
  std::vector<ErrorInstance> out;
  for (const auto& set : model_sets) {
    auto it = truth.find(set.patient_id);
    if (it == truth.end()) continue;
    const auto paths = set.paths();
    const auto idx = mode_path_index(paths);
    if (!idx) continue;
    const auto& mode = paths[*idx].nodes();
    const auto& gold = it->second->annotated_path->nodes();
    std::set<NodeRef> a(mode.begin(), mode.end()), b(gold.begin(), gold.end());
    std::vector<NodeRef> diff;
    std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(diff));
    for (auto& n : diff) out.push_back({set.patient_id, std::move(n)});
  }
  return out;
}

std::optional<double> error_coverage(std::span<const ConfusionPoint> ranked, std::span<const ErrorInstance> errors,
                                     std::size_t top_n, bool page_level) {
  if (errors.empty()) return std::nullopt;
  std::set<std::string> top;
  for (std::size_t i = 0; i < std::min(top_n, ranked.size()); ++i) top.insert(ranked[i].key);
  std::size_t hit = 0;
  for (const auto& e : errors) hit += top.count(page_level ? e.node.page_id : e.node.render());
  return static_cast<double>(hit) / static_cast<double>(errors.size());
}

nlohmann::json confusion_report(std::span<const ConfusionPoint> ranked) {
  auto out = nlohmann::json::array();
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& p = ranked[i];
    out.push_back({{"rank", i + 1},
                   {"node", p.key},
                   {"divergence_count", p.divergence_count},
                   {"models_affected", p.models_affected},
                   {"example_patient_ids", p.example_patient_ids}});
  }
  return out;
}

}  // namespace guidebench
