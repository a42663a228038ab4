// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidebench/pseudo_label.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "guidebench/digest.hpp"

namespace guidebench {

namespace {

constexpr std::pair<ProxyMethod, const char*> kMethodNames[] = {
    {ProxyMethod::self_overlap, "self_overlap"},
    {ProxyMethod::self_treatment, "self_treatment"},
    {ProxyMethod::cross_overlap, "cross_overlap"},
    {ProxyMethod::cross_treatment, "cross_treatment"},
    {ProxyMethod::synth_structured, "synth_structured"},
    {ProxyMethod::synth_unstructured, "synth_unstructured"},
};

bool is_overlap(ProxyMethod m) { return m == ProxyMethod::self_overlap || m == ProxyMethod::cross_overlap; }

}  // namespace

std::string to_string(ProxyMethod m) {
  for (const auto& [v, name] : kMethodNames)
    if (v == m) return name;
  return "?";
}

ProxyMethod proxy_method_from_string(const std::string& s) {
  for (const auto& [v, name] : kMethodNames)
    if (s == name) return v;
  throw std::invalid_argument("unknown proxy method '" + s + "'");
}

bool is_self(ProxyMethod m) { return m == ProxyMethod::self_overlap || m == ProxyMethod::self_treatment; }

std::string PseudoLabel::value_key() const {
  if (is_overlap(source) && label_path) return node_set_key(*label_path);
  if (label_treatment) return label_treatment->render();
  if (label_path && !label_path->empty()) return label_path->back().render();
  return "";
}

std::string PseudoLabel::render() const {
  if (label_path) return label_path->render();
  return label_treatment ? label_treatment->render() : "";
}

std::optional<PseudoLabel> mode_label(const RolloutSet& rollouts, MetricKind metric, ProxyMethod source) {
  const auto paths = rollouts.paths();
  PseudoLabel label{rollouts.patient_id, std::nullopt, std::nullopt, source, 0.0};
  if (metric == MetricKind::path_overlap) {
    const auto idx = mode_path_index(paths);
    if (!idx) return std::nullopt;
    label.label_path = paths[*idx];
    label.agreement = path_overlap(paths).value;
  } else {
    const auto node = mode_final_node(paths);
    if (!node) return std::nullopt;
    label.label_treatment = *node;
    label.agreement = treatment_match_consistency(paths).value;
  }
  return label;
}

LabelDecision self_consistency_label(const RolloutSet& rollouts, MetricKind metric, double delta) {
  if (rollouts.rollouts.empty()) throw std::invalid_argument("self_consistency_label: no rollouts");
  if (!(delta >= 0.0 && delta <= 1.0)) throw std::invalid_argument("delta must lie in [0, 1]");
  const auto source = metric == MetricKind::path_overlap ? ProxyMethod::self_overlap : ProxyMethod::self_treatment;
  auto label = mode_label(rollouts, metric, source);
  if (!label) return {std::nullopt, 0.0, "no parseable rollouts"};
  const double agreement = label->agreement;
  if (agreement >= delta) return {std::move(label), agreement, ""};
  return {std::nullopt, agreement, "agreement below threshold"};
}

ProxyBenchmark build_self_benchmark(std::span<const RolloutSet> model_rollouts, MetricKind metric, double delta) {
  if (model_rollouts.empty()) throw std::invalid_argument("build_self_benchmark: empty cohort");
  ProxyBenchmark bench;
  bench.method = metric == MetricKind::path_overlap ? ProxyMethod::self_overlap : ProxyMethod::self_treatment;
  bench.source_model = model_rollouts.front().model_id;
  std::set<std::string> seen;
  for (const auto& set : model_rollouts) {
    if (set.model_id != bench.source_model)
      throw std::invalid_argument("build_self_benchmark: rollouts from several models");
    if (!seen.insert(set.patient_id).second)
      throw std::invalid_argument("build_self_benchmark: duplicate patient " + set.patient_id);
    auto d = self_consistency_label(set, metric, delta);
    if (d.accepted())
      bench.entries.push_back({set.patient_id, std::move(*d.label), ""});
    else
      bench.zero_scored.push_back(set.patient_id);
  }
  return bench;
}

std::optional<PseudoLabel> cross_model_label(std::span<const std::pair<std::string, PseudoLabel>> per_model) {
  if (per_model.size() < 2) return std::nullopt;
  std::vector<const std::pair<std::string, PseudoLabel>*> sorted;
  for (const auto& p : per_model) sorted.push_back(&p);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->first < b->first; });

  std::map<std::string, std::size_t> support;
  for (const auto* p : sorted) ++support[p->second.value_key()];
  std::string best;
  std::size_t top = 0;
  for (const auto& [key, n] : support) {
    if (n > top) {
      top = n;
      best = key;
    }
  }
  if (top < 2) return std::nullopt;
  for (const auto* p : sorted) {
    if (p->second.value_key() == best) {
      PseudoLabel out = p->second;
      out.source = is_overlap(out.source) ? ProxyMethod::cross_overlap : ProxyMethod::cross_treatment;
      out.agreement = static_cast<double>(top) / static_cast<double>(sorted.size());
      return out;
    }
  }
  return std::nullopt;
}

ProxyBenchmark build_cross_benchmark(std::span<const RolloutSet> all_rollouts, MetricKind metric) {
  if (all_rollouts.empty()) throw std::invalid_argument("build_cross_benchmark: empty cohort");
  const auto source = metric == MetricKind::path_overlap ? ProxyMethod::cross_overlap : ProxyMethod::cross_treatment;
  std::map<std::string, std::vector<std::pair<std::string, PseudoLabel>>> by_patient;
  std::vector<std::string> order;
  for (const auto& set : all_rollouts) {
    auto [it, fresh] = by_patient.try_emplace(set.patient_id);
    if (fresh) order.push_back(set.patient_id);
    if (auto label = mode_label(set, metric, source)) it->second.emplace_back(set.model_id, std::move(*label));
  }
  ProxyBenchmark bench;
  bench.method = source;
  for (const auto& pid : order) {
    if (auto label = cross_model_label(by_patient[pid])) {
      label->source = source;
      bench.entries.push_back({pid, std::move(*label), ""});
    }
  }
  return bench;
}

double score_against(const GuidelinePath& prediction, const PseudoLabel& label, MetricKind metric) {
  if (prediction.empty()) return 0.0;
  if (metric == MetricKind::treatment_match) {
    const auto target = label.label_treatment ? label.label_treatment
                        : (label.label_path && !label.label_path->empty()) ? std::optional(label.label_path->back())
                                                                          : std::nullopt;
    if (!target) throw std::invalid_argument("label for " + label.patient_id + " has no treatment");
    return prediction.back() == *target ? 1.0 : 0.0;
  }
  if (!label.label_path) throw std::invalid_argument("label for " + label.patient_id + " has no path");
  const GuidelinePath pair[] = {prediction, *label.label_path};
  return path_overlap(pair).value;
}

ProxyScore mean_sem(std::span<const double> values) {
  ProxyScore s;
  s.n_cases = values.size();
  if (values.empty()) return s;
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    const double n = static_cast<double>(values.size());
    s.sem = std::sqrt(ss / (n - 1)) / std::sqrt(n);
  }
  return s;
}

namespace {

double case_score(const RolloutSet& set, const PseudoLabel& label, MetricKind metric) {
  if (set.rollouts.empty()) return 0.0;
  double sum = 0;
  for (const auto& p : set.paths()) sum += score_against(p, label, metric);
  return sum / static_cast<double>(set.rollouts.size());
}

}  // namespace

ProxyScore score_model_on_proxy(std::span<const RolloutSet> model_rollouts, const ProxyBenchmark& bench,
                                MetricKind metric) {
  if (bench.entries.empty() && bench.zero_scored.empty())
    throw std::invalid_argument("score_model_on_proxy: empty benchmark");
  std::map<std::string, const RolloutSet*> by_patient;
  std::string model;
  for (const auto& s : model_rollouts) {
    by_patient[s.patient_id] = &s;
    model = s.model_id;
  }
  std::vector<double> scores;
  for (const auto& e : bench.entries) {
    auto it = by_patient.find(e.patient_id);
    if (it != by_patient.end()) scores.push_back(case_score(*it->second, e.label, metric));
  }
  std::size_t zeros = 0;
  if (is_self(bench.method) && !model.empty() && model == bench.source_model) {
    for (const auto& pid : bench.zero_scored) {
      if (by_patient.count(pid)) {
        scores.push_back(0.0);
        ++zeros;
      }
    }
  }
  if (scores.empty()) throw std::invalid_argument("score_model_on_proxy: no overlapping patients");
  auto s = mean_sem(scores);
  s.n_zero_scored = zeros;
  return s;
}

ProxyScore score_model_on_truth(std::span<const RolloutSet> model_rollouts, std::span<const PatientCase> cases,
                                MetricKind metric) {
  std::map<std::string, const PatientCase*> truth;
  for (const auto& c : cases)
    if (c.annotated_path) truth[c.patient_id] = &c;
  std::vector<double> scores;
  for (const auto& s : model_rollouts) {
    auto it = truth.find(s.patient_id);
    if (it == truth.end()) continue;
    PseudoLabel label{s.patient_id, it->second->annotated_path, it->second->annotated_path->back(),
                      ProxyMethod::self_overlap, 1.0};
    scores.push_back(case_score(s, label, metric));
  }
  if (scores.empty()) throw std::invalid_argument("score_model_on_truth: no annotated patients");
  return mean_sem(scores);
}

void write_benchmark(const std::filesystem::path& path, const ProxyBenchmark& bench) {
  std::string out;
  for (const auto& e : bench.entries) {
    nlohmann::json j = {{"patient_id", e.patient_id},
                        {"method", to_string(bench.method)},
                        {"label", e.label.render()},
                        {"agreement", e.label.agreement}};
    if (!e.note_text.empty()) j["note_text"] = e.note_text;
    out += j.dump() + "\n";
  }
  write_file(path, out);
  nlohmann::json manifest = {{"method", to_string(bench.method)},
                             {"source_model", bench.source_model},
                             {"entries", bench.entries.size()},
                             {"zero_scored", bench.zero_scored}};
  write_file(path.string() + ".manifest.json", manifest.dump(2) + "\n");
}

ProxyBenchmark load_benchmark(const std::filesystem::path& path) {
  const auto manifest = nlohmann::json::parse(read_file(path.string() + ".manifest.json"));
  ProxyBenchmark bench;
  bench.method = proxy_method_from_string(manifest.at("method").get<std::string>());
  bench.source_model = manifest.value("source_model", "");
  bench.zero_scored = manifest.at("zero_scored").get<std::vector<std::string>>();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open benchmark " + path.string());
  std::set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    BenchmarkEntry e;
    e.patient_id = j.at("patient_id").get<std::string>();
    if (!seen.insert(e.patient_id).second) throw std::invalid_argument("duplicate benchmark entry " + e.patient_id);
    if (j.at("method").get<std::string>() != to_string(bench.method))
      throw std::invalid_argument("mixed methods in benchmark " + path.string());
    e.label.patient_id = e.patient_id;
    e.label.source = bench.method;
    e.label.agreement = j.value("agreement", 0.0);
    const auto text = j.at("label").get<std::string>();
    if (bench.method == ProxyMethod::self_treatment || bench.method == ProxyMethod::cross_treatment) {
      e.label.label_treatment = NodeRef::parse(text);
    } else {
      e.label.label_path = parse_path_string(text);
      if (!is_overlap(bench.method)) e.label.label_treatment = e.label.label_path->back();
    }
    e.note_text = j.value("note_text", "");
    bench.entries.push_back(std::move(e));
  }
  return bench;
}

}  // namespace guidebench
