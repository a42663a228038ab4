// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidebench/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "guidebench/digest.hpp"

namespace guidebench {
namespace {

void same_length(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

}  // namespace

Eigen::VectorXd average_ranks(const VecRef& x) {
  const Eigen::Index n = x.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return x[i] < x[j]; });
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index t = i; t <= j; ++t) r[order[t]] = avg;
    i = j + 1;
  }
  return r;
}

std::optional<double> pearson(const VecRef& a, const VecRef& b) {
  same_length(a.size(), b.size(), "pearson");
  if (a.size() < 2) throw std::invalid_argument("pearson: need at least 2 values");
  const Eigen::VectorXd da = a.array() - a.mean();
  const Eigen::VectorXd db = b.array() - b.mean();
  const double saa = da.squaredNorm(), sbb = db.squaredNorm();
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return std::clamp(da.dot(db) / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::optional<double> spearman(const VecRef& a, const VecRef& b) {
  same_length(a.size(), b.size(), "spearman");
  if (a.size() < 2) throw std::invalid_argument("spearman: need at least 2 values");
  return pearson(average_ranks(a), average_ranks(b));
}

double rmse(const VecRef& a, const VecRef& b) {
  same_length(a.size(), b.size(), "rmse");
  if (a.size() == 0) throw std::invalid_argument("rmse: empty input");
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

RocCurve roc_curve(const VecRef& scores, std::span<const int> labels) {
  same_length(scores.size(), static_cast<Eigen::Index>(labels.size()), "roc_curve");
  double pos = 0, neg = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("roc_curve: labels must be 0 or 1");
    (l ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0) throw std::invalid_argument("roc_curve: both classes must be present");

  std::vector<Eigen::Index> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return scores[i] > scores[j]; });

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double thr = scores[order[i]];
    while (i < order.size() && scores[order[i]] == thr) {
      (labels[static_cast<std::size_t>(order[i])] ? tp : fp) += 1;
      ++i;
    }
    const auto& prev = curve.points.back();
    const RocPoint p{thr, fp / neg, tp / pos};
    curve.auroc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
    curve.points.push_back(p);
  }
  return curve;
}

ConfusionMatrix confusion_matrix(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("confusion_matrix: length mismatch");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] && truth[i]) ++m.tp;
    else if (pred[i]) ++m.fp;
    else if (truth[i]) ++m.fn;
    else ++m.tn;
  }
  return m;
}

double f1_binary(std::span<const int> pred, std::span<const int> truth) {
  const auto m = confusion_matrix(pred, truth);
  const double denom = 2.0 * static_cast<double>(m.tp) + static_cast<double>(m.fp + m.fn);
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(m.tp) / denom;
}

void ModelScoreTable::set_true(const std::string& model, double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("true score outside [0, 1] for " + model);
  rows[model].true_score = v;
}

void ModelScoreTable::set_proxy(const std::string& model, const std::string& method, double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("proxy score outside [0, 1] for " + model);
  rows[model].proxy[method] = v;
}

std::vector<std::string> ModelScoreTable::methods() const {
  std::set<std::string> all;
  for (const auto& [_, row] : rows)
    for (const auto& [m, __] : row.proxy) all.insert(m);
  return {all.begin(), all.end()};
}

std::vector<FidelityResult> benchmark_fidelity(const ModelScoreTable& table) {
  std::vector<FidelityResult> out;
  for (const auto& method : table.methods()) {
    std::vector<double> truth, proxy;
    for (const auto& [_, row] : table.rows) {
      auto it = row.proxy.find(method);
      if (!row.true_score || it == row.proxy.end()) continue;
      truth.push_back(*row.true_score);
      proxy.push_back(it->second);
    }
    if (truth.size() < 2)
      throw std::invalid_argument("benchmark_fidelity: method " + method + " has fewer than 2 scored models");
    out.push_back({method, truth.size(), spearman(as_vector(proxy), as_vector(truth)),
                   rmse(as_vector(proxy), as_vector(truth))});
  }
  if (out.empty()) throw std::invalid_argument("benchmark_fidelity: no proxy scores");
  return out;
}

nlohmann::json fidelity_report(std::span<const ModelScoreTable> tables) {
  nlohmann::json report = nlohmann::json::object();
  for (const auto& t : tables) {
    auto& slot = report[to_string(t.metric)];
    for (const auto& r : benchmark_fidelity(t)) {
      slot[r.method] = {{"spearman", r.spearman ? nlohmann::json(*r.spearman) : nlohmann::json()},
                        {"rmse", r.rmse},
                        {"n_models", r.n_models}};
    }
  }
  return report;
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve) {
  std::string out = "threshold,fpr,tpr\n";
  char line[96];
  for (const auto& p : curve.points) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", p.threshold, p.fpr, p.tpr);
    out += line;
  }
  write_file(path, out);
}

std::string roc_svg(const RocCurve& curve, const std::string& title) {
  constexpr double size = 320, pad = 40;
  auto x = [&](double f) { return pad + f * size; };
  auto y = [&](double t) { return pad + (1.0 - t) * size; };
  std::string pts;
  char buf[64];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x(p.fpr), y(p.tpr));
    pts += buf;
  }
  std::string esc;
  for (char c : title) {
    if (c == '<') esc += "&lt;";
    else if (c == '>') esc += "&gt;";
    else if (c == '&') esc += "&amp;";
    else esc += c;
  }
  std::snprintf(buf, sizeof buf, "AUROC %.3f", curve.auroc);
  const auto W = std::to_string(static_cast<int>(size + 2 * pad));
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + W + "\" height=\"" + W + "\">\n"
         "<rect x=\"40\" y=\"40\" width=\"320\" height=\"320\" fill=\"none\" stroke=\"#888\"/>\n"
         "<line x1=\"40\" y1=\"360\" x2=\"360\" y2=\"40\" stroke=\"#bbb\" stroke-dasharray=\"4\"/>\n"
         "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"2\" points=\"" + pts + "\"/>\n"
         "<text x=\"40\" y=\"28\" font-family=\"sans-serif\" font-size=\"13\">" + esc + " (" + buf + ")</text>\n"
         "<text x=\"200\" y=\"392\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">FPR</text>\n"
         "<text x=\"14\" y=\"200\" font-family=\"sans-serif\" font-size=\"11\">TPR</text>\n"
         "</svg>\n";
}

}  // namespace guidebench
