// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidebench/classifier.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "guidebench/digest.hpp"
#include "guidebench/metrics.hpp"

namespace guidebench {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

constexpr std::pair<FeatureSet, const char*> kSetNames[] = {
    {FeatureSet::base, "Base"},
    {FeatureSet::internal, "Internal"},
    {FeatureSet::aggregated_only, "Aggregated_only"},
    {FeatureSet::base_aggregated, "Base_aggregated"},
    {FeatureSet::all, "All"},
};

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

std::string to_string(FeatureSet s) {
  for (const auto& [v, name] : kSetNames)
    if (v == s) return name;
  return "?";
}

FeatureSet feature_set_from_string(const std::string& s) {
  const auto l = lower(s);
  for (const auto& [v, name] : kSetNames)
    if (l == lower(name)) return v;
  if (l == "agg" || l == "aggregated") return FeatureSet::aggregated_only;
  if (l == "base+agg" || l == "base+aggregated") return FeatureSet::base_aggregated;
  throw std::invalid_argument("unknown feature set '" + s + "'");
}

std::vector<std::size_t> feature_indices(FeatureSet set) {
  const std::vector<std::size_t> self = {0, 1}, synth = {2, 3}, cons = {4, 5, 6, 7}, cross = {8, 9};
  std::vector<std::size_t> out;
  auto add = [&](const std::vector<std::size_t>& g) { out.insert(out.end(), g.begin(), g.end()); };
  switch (set) {
    case FeatureSet::base: add(self); break;
    case FeatureSet::internal: add(self); add(synth); add(cons); break;
    case FeatureSet::aggregated_only: add(cross); break;
    case FeatureSet::base_aggregated: add(self); add(cross); break;
    case FeatureSet::all: add(self); add(synth); add(cons); add(cross); break;
  }
  return out;
}

std::vector<std::string> feature_columns(FeatureSet set) {
  std::vector<std::string> out;
  for (auto i : feature_indices(set)) out.emplace_back(kFeatureColumns[i]);
  return out;
}

Eigen::MatrixXd FeatureTable::matrix() const {
  const auto cols = feature_indices(feature_set);
  return matrix(cols);
}

Eigen::MatrixXd FeatureTable::matrix(std::span<const std::size_t> columns) const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < columns.size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r].values[columns[c]];
  return m;
}

std::vector<int> FeatureTable::labels() const {
  std::vector<int> y;
  y.reserve(rows.size());
  for (const auto& r : rows) {
    if (!r.label) throw std::invalid_argument("row " + r.model_id + "/" + r.patient_id + " has no label");
    y.push_back(*r.label);
  }
  return y;
}

FeatureTable FeatureTable::subset(std::span<const std::size_t> row_indices) const {
  FeatureTable t{feature_set, {}};
  for (auto i : row_indices) t.rows.push_back(rows.at(i));
  return t;
}

FeatureTable extract_features(std::span<const RolloutSet> rollouts, std::span<const PatientCase> cases,
                              const BenchScores& bench_scores, FeatureSet set) {
  std::map<std::string, std::map<std::string, const RolloutSet*>> by_model;
  for (const auto& s : rollouts) by_model[s.model_id][s.patient_id] = &s;
  if (by_model.empty()) throw std::invalid_argument("extract_features: no rollouts");

  const auto needed = feature_indices(set);
  auto needs = [&](std::size_t col) { return std::find(needed.begin(), needed.end(), col) != needed.end(); };

  // Mode node-set and mode final node per (model, patient); empty if none.
  std::map<std::string, std::map<std::string, std::pair<std::string, std::string>>> modes;
  for (const auto& [model, sets] : by_model) {
    for (const auto& c : cases) {
      auto it = sets.find(c.patient_id);
      if (it == sets.end())
        throw std::invalid_argument("extract_features: missing rollouts for " + model + "/" + c.patient_id);
      const auto paths = it->second->paths();
      const auto pi = mode_path_index(paths);
      const auto fi = mode_final_node(paths);
      modes[model][c.patient_id] = {pi ? node_set_key(paths[*pi]) : "", fi ? fi->render() : ""};
    }
  }

  constexpr std::pair<std::size_t, ProxyMethod> kBenchColumns[] = {
      {2, ProxyMethod::synth_structured}, {3, ProxyMethod::synth_unstructured},
      {4, ProxyMethod::self_overlap},     {5, ProxyMethod::self_treatment},
      {6, ProxyMethod::cross_overlap},    {7, ProxyMethod::cross_treatment},
  };

  FeatureTable table{set, {}};
  const double n_models = static_cast<double>(by_model.size());
  for (const auto& [model, sets] : by_model) {
    const auto bench_it = bench_scores.find(model);
    for (const auto& c : cases) {
      const auto paths = sets.at(c.patient_id)->paths();
      FeatureRow row{model, c.patient_id, {}, std::nullopt};
      row.values.fill(kNaN);
      row.values[0] = path_overlap(paths).value;
      row.values[1] = treatment_match_consistency(paths).value;
      for (const auto& [col, method] : kBenchColumns) {
        std::optional<double> v;
        if (bench_it != bench_scores.end()) {
          auto m = bench_it->second.find(method);
          if (m != bench_it->second.end()) v = m->second;
        }
        if (v) row.values[col] = *v;
        else if (needs(col))
          throw std::invalid_argument("extract_features: no " + to_string(method) + " score for " + model);
      }
      const auto& [mine_path, mine_final] = modes[model][c.patient_id];
      double same_path = 0, same_final = 0;
      for (const auto& [other, per] : modes) {
        const auto& [p, f] = per.at(c.patient_id);
        same_path += !mine_path.empty() && p == mine_path;
        same_final += !mine_final.empty() && f == mine_final;
      }
      row.values[8] = same_path / n_models;
      row.values[9] = same_final / n_models;
      if (c.annotated_path && !c.annotated_path->empty())
        row.label = (!mine_final.empty() && mine_final == c.annotated_path->back().render()) ? 1 : 0;
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

void write_feature_csv(const std::filesystem::path& path, const FeatureTable& table) {
  const auto cols = feature_indices(table.feature_set);
  std::string out = "model_id,patient_id";
  for (auto c : cols) out += std::string(",") + kFeatureColumns[c];
  out += ",label\n";
  char buf[40];
  for (const auto& r : table.rows) {
    if (r.model_id.find_first_of(",\"\n") != std::string::npos || r.patient_id.find_first_of(",\"\n") != std::string::npos)
      throw std::invalid_argument("identifiers must not contain commas, quotes or newlines");
    out += r.model_id + "," + r.patient_id;
    for (auto c : cols) {
      std::snprintf(buf, sizeof buf, ",%.17g", r.values[c]);
      out += buf;
    }
    out += "," + (r.label ? std::to_string(*r.label) : std::string()) + "\n";
  }
  write_file(path, out);
}

FeatureTable load_feature_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty feature table " + path.string());
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  const auto header = split(line);
  if (header.size() < 3 || header[0] != "model_id" || header[1] != "patient_id" || header.back() != "label")
    throw std::invalid_argument("unexpected feature table header in " + path.string());
  const std::vector<std::string> names(header.begin() + 2, header.end() - 1);
  std::optional<FeatureSet> set;
  for (const auto& [v, _] : kSetNames)
    if (feature_columns(v) == names) set = v;
  if (!set) throw std::invalid_argument("feature table columns match no feature set");
  const auto cols = feature_indices(*set);

  FeatureTable table{*set, {}};
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) throw std::invalid_argument("ragged row in " + path.string());
    FeatureRow row{cells[0], cells[1], {}, std::nullopt};
    row.values.fill(kNaN);
    for (std::size_t i = 0; i < cols.size(); ++i) row.values[cols[i]] = std::stod(cells[i + 2]);
    if (!cells.back().empty()) row.label = std::stoi(cells.back());
    table.rows.push_back(std::move(row));
  }
  return table;
}

Split stratified_split(const FeatureTable& table, double ratio, Seed seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split ratio must lie in (0, 1)");
  std::set<std::string> unique;
  for (const auto& r : table.rows) unique.insert(r.patient_id);
  std::vector<std::string> ids(unique.begin(), unique.end());
  const auto n = ids.size();
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  if (n < 2 || n_train == 0 || n_train == n)
    throw std::invalid_argument("stratified_split: too few patients for both folds");
  Rng rng(derive_seed(seed, "split", ""));
  for (std::size_t i = n; i > 1; --i) std::swap(ids[i - 1], ids[rng.index(i)]);

  Split s;
  s.train_patients.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test_patients.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  const std::set<std::string> train(s.train_patients.begin(), s.train_patients.end());
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    (train.count(table.rows[i].patient_id) ? s.train_rows : s.test_rows).push_back(i);
  return s;
}

LogisticObjective::LogisticObjective(Eigen::MatrixXd z, Eigen::VectorXd y, Eigen::VectorXd sample_weights, double C)
    : z_(std::move(z)), y_(std::move(y)), s_(std::move(sample_weights)), C_(C) {}

Eigen::VectorXd LogisticObjective::margins(const Eigen::VectorXd& theta) const {
  const auto d = z_.cols();
  return (z_ * theta.head(d)).array() + theta[d];
}

double LogisticObjective::value(const Eigen::VectorXd& theta) const {
  const auto m = margins(theta);
  double loss = 0;
  for (Eigen::Index i = 0; i < m.size(); ++i) loss += s_[i] * (softplus(m[i]) - y_[i] * m[i]);
  const auto w = theta.head(z_.cols());
  return loss / static_cast<double>(m.size()) + w.squaredNorm() / (2.0 * C_);
}

Eigen::VectorXd LogisticObjective::gradient(const Eigen::VectorXd& theta) const {
  const auto d = z_.cols();
  const auto m = margins(theta);
  Eigen::VectorXd r(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) r[i] = s_[i] * (sigmoid(m[i]) - y_[i]);
  const double n = static_cast<double>(m.size());
  Eigen::VectorXd g(d + 1);
  g.head(d) = z_.transpose() * r / n + theta.head(d) / C_;
  g[d] = r.sum() / n;
  return g;
}

Eigen::MatrixXd LogisticObjective::hessian(const Eigen::VectorXd& theta) const {
  const auto d = z_.cols();
  const auto m = margins(theta);
  Eigen::VectorXd w(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double p = sigmoid(m[i]);
    w[i] = s_[i] * p * (1 - p);
  }
  Eigen::MatrixXd za(z_.rows(), d + 1);
  za << z_, Eigen::VectorXd::Ones(z_.rows());
  Eigen::MatrixXd h = za.transpose() * w.asDiagonal() * za / static_cast<double>(m.size());
  h.topLeftCorner(d, d).diagonal().array() += 1.0 / C_;
  return h;
}

Eigen::MatrixXd TrainedClassifier::standardize(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size())
    throw std::invalid_argument("expected " + std::to_string(mean.size()) + " features, got " +
                                std::to_string(x.cols()));
  Eigen::MatrixXd z(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (constant[static_cast<std::size_t>(j)]) z.col(j).setZero();
    else z.col(j) = (x.col(j).array() - mean[j]) / stddev[j];
  }
  return z;
}

namespace {

void check_inputs(const Eigen::MatrixXd& x, std::span<const int> y) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw std::invalid_argument("train: row/label count mismatch");
  if (!x.allFinite()) throw std::invalid_argument("train: non-finite feature values");
  bool pos = false, neg = false;
  for (int v : y) {
    if (v != 0 && v != 1) throw std::invalid_argument("train: labels must be 0 or 1");
    (v ? pos : neg) = true;
  }
  if (!pos || !neg) throw std::invalid_argument("train: training data has a single class");
}

Eigen::VectorXd label_vector(std::span<const int> y) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) v[static_cast<Eigen::Index>(i)] = y[i];
  return v;
}

Eigen::VectorXd sample_weights(std::span<const int> y, const std::array<double, 2>& cw) {
  Eigen::VectorXd s(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) s[static_cast<Eigen::Index>(i)] = cw[static_cast<std::size_t>(y[i])];
  return s;
}

}  // namespace

LogisticObjective training_objective(const TrainedClassifier& clf, const Eigen::MatrixXd& x, std::span<const int> y) {
  return LogisticObjective(clf.standardize(x), label_vector(y), sample_weights(y, clf.class_weights), clf.C);
}

TrainedClassifier train(const Eigen::MatrixXd& x, std::span<const int> y, FeatureSet set, const TrainOptions& options) {
  check_inputs(x, y);
  if (!(options.C > 0)) throw std::invalid_argument("train: C must be positive");
  TrainedClassifier clf;
  clf.feature_set = set;
  clf.columns = feature_columns(set);
  if (static_cast<std::size_t>(x.cols()) != clf.columns.size())
    throw std::invalid_argument("train: matrix has " + std::to_string(x.cols()) + " columns, feature set " +
                                to_string(set) + " needs " + std::to_string(clf.columns.size()));
  clf.C = options.C;
  clf.seed = options.seed;

  const double n = static_cast<double>(x.rows());
  clf.mean = x.colwise().mean().transpose();
  clf.stddev = ((x.rowwise() - clf.mean.transpose()).array().square().colwise().sum() / n).sqrt().transpose();
  clf.constant.resize(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const bool flat = !(clf.stddev[j] > 1e-12 * std::max(1.0, std::abs(clf.mean[j])));
    clf.constant[static_cast<std::size_t>(j)] = flat;
    if (flat) clf.stddev[j] = 0.0;
  }

  double n_pos = 0;
  for (int v : y) n_pos += v;
  clf.class_weights = {n / (2.0 * (n - n_pos)), n / (2.0 * n_pos)};

  const auto obj = training_objective(clf, x, y);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(obj.dim());
  double f = obj.value(theta);
  Eigen::VectorXd g = obj.gradient(theta);
  int it = 0;
  for (; it < options.max_iter && g.norm() > options.tolerance; ++it) {
    const Eigen::VectorXd step = obj.hessian(theta).ldlt().solve(g);
    const double slope = g.dot(step);
    double t = 1.0;
    Eigen::VectorXd next = theta - step;
    double fn = obj.value(next);
    for (int h = 0; h < 60 && fn > f - 1e-4 * t * slope; ++h) {
      t *= 0.5;
      next = theta - t * step;
      fn = obj.value(next);
    }
    if (!(fn <= f)) break;
    theta = next;
    f = fn;
    g = obj.gradient(theta);
  }
  const auto d = x.cols();
  clf.weights = theta.head(d);
  for (Eigen::Index j = 0; j < d; ++j)
    if (clf.constant[static_cast<std::size_t>(j)]) clf.weights[j] = 0.0;
  clf.bias = theta[d];
  clf.iterations = it;
  clf.gradient_norm = g.norm();
  clf.loss = f;
  return clf;
}

Eigen::VectorXd predict_proba(const TrainedClassifier& clf, const Eigen::MatrixXd& x) {
  const Eigen::VectorXd m = (clf.standardize(x) * clf.weights).array() + clf.bias;
  return m.unaryExpr([](double v) { return sigmoid(v); });
}

Evaluation evaluate(const TrainedClassifier& clf, const Eigen::MatrixXd& x, std::span<const int> y) {
  const auto p = predict_proba(clf, x);
  Evaluation e;
  e.roc = roc_curve(p, y);
  e.auroc = e.roc.auroc;
  std::vector<int> pred(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) pred[i] = p[static_cast<Eigen::Index>(i)] >= 0.5 ? 1 : 0;
  e.confusion = confusion_matrix(pred, y);
  e.f1 = f1_binary(pred, y);
  return e;
}

namespace {

nlohmann::json to_list(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd from_list(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json TrainedClassifier::to_json() const {
  return {{"feature_set", to_string(feature_set)},
          {"columns", columns},
          {"weights", to_list(weights)},
          {"bias", bias},
          {"standardization", {{"mean", to_list(mean)}, {"stddev", to_list(stddev)}, {"constant", constant}}},
          {"C", C},
          {"class_weights", class_weights},
          {"seed", seed},
          {"iterations", iterations},
          {"gradient_norm", gradient_norm},
          {"loss", loss}};
}

TrainedClassifier TrainedClassifier::from_json(const nlohmann::json& j) {
  TrainedClassifier c;
  c.feature_set = feature_set_from_string(j.at("feature_set").get<std::string>());
  c.columns = j.at("columns").get<std::vector<std::string>>();
  c.weights = from_list(j.at("weights"));
  c.bias = j.at("bias").get<double>();
  c.mean = from_list(j.at("standardization").at("mean"));
  c.stddev = from_list(j.at("standardization").at("stddev"));
  c.constant = j.at("standardization").at("constant").get<std::vector<bool>>();
  c.C = j.at("C").get<double>();
  c.class_weights = j.at("class_weights").get<std::array<double, 2>>();
  c.seed = j.value("seed", Seed{0});
  c.iterations = j.value("iterations", 0);
  c.gradient_norm = j.value("gradient_norm", 0.0);
  c.loss = j.value("loss", 0.0);
  const auto d = static_cast<std::size_t>(c.weights.size());
  if (c.columns.size() != d || static_cast<std::size_t>(c.mean.size()) != d ||
      static_cast<std::size_t>(c.stddev.size()) != d || c.constant.size() != d)
    throw std::invalid_argument("classifier artifact dimensions disagree");
  return c;
}

}  // namespace guidebench
