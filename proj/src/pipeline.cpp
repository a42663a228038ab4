// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidebench/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>

#include "guidebench/digest.hpp"
#include "guidebench/discovery.hpp"
#include "guidebench/pseudo_label.hpp"
#include "guidebench/simulation.hpp"
#include "guidebench/stats.hpp"
#include "guidebench/synthetic.hpp"

namespace guidebench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kStages = {"ingest",   "rollout", "proxy-build", "proxy-score",
                                          "fidelity", "features", "train",      "evaluate",
                                          "cluster",  "errors",   "report"};

const std::map<std::string, std::string> kProducers = {
    {"cohort.jsonl", "ingest"},          {"rollouts.jsonl", "rollout"},
    {"benchmarks/index.json", "proxy-build"}, {"synth_rollouts.jsonl", "proxy-build"},
    {"scores.json", "proxy-score"},      {"fidelity.json", "fidelity"},
    {"features.csv", "features"},        {"classifier.json", "train"},
    {"split.json", "train"},             {"evaluation.json", "evaluate"},
    {"clusters.json", "cluster"},        {"confusion.json", "errors"},
    {"report.json", "report"},
};

std::string dir_hash(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string acc;
  for (const auto& f : files) acc += f.filename().string() + ":" + file_sha256_hex(f) + "\n";
  return sha256_hex(acc);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  return out;
}

std::map<std::string, std::vector<RolloutSet>> by_model(const std::vector<RolloutSet>& sets) {
  std::map<std::string, std::vector<RolloutSet>> out;
  for (const auto& s : sets) out[s.model_id].push_back(s);
  return out;
}

std::string fmt(double v, const char* pattern = "%.3f") {
  char buf[32];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

}  // namespace

std::vector<std::string> split_models_arg(const std::string& s) { return split_list(s); }

std::string content_digest(const std::string& content) {
  return sha256_hex("blob " + std::to_string(content.size()) + std::string(1, '\0') + content);
}

std::string producing_stage(const std::string& artifact) {
  auto it = kProducers.find(artifact);
  return it == kProducers.end() ? "" : it->second;
}

const PredictorSpec& PipelineConfig::find_model(const std::string& id) const {
  for (const auto& m : roster)
    if (m.model_id == id) return m;
  throw ConfigError("model '" + id + "' is not declared in the config");
}

PipelineConfig load_config(const fs::path& path, const CliOverrides& ov, const fs::path& out_dir) {
  json raw;
  try {
    raw = json::parse(read_file(path));
  } catch (const std::exception& e) {
    throw ConfigError("cannot read config " + path.string() + ": " + e.what());
  }
  if (!raw.is_object()) throw ConfigError("config must be a JSON object");
  const fs::path base = path.parent_path();
  PipelineConfig c;

  try {
    const auto graph_rel = get_or<std::string>(raw, "graph", "");
    if (graph_rel.empty()) throw ConfigError("config needs 'graph'");
    c.graph_path = base / graph_rel;
    c.prompts_dir = base / get_or<std::string>(raw, "prompts", "prompts");
    c.exemplars_dir = base / get_or<std::string>(raw, "exemplars", "exemplars");
    const auto cohort_rel = get_or<std::string>(raw, "cohort", "");
    if (!cohort_rel.empty()) c.cohort_path = base / cohort_rel;
    const auto gf = get_or<std::string>(raw, "graph_format", "json");
    if (gf != "json" && gf != "outline") throw ConfigError("graph_format must be 'json' or 'outline'");
    c.graph_format = gf == "json" ? GraphFormat::json : GraphFormat::outline;

    c.seed = ov.seed.value_or(get_or<Seed>(raw, "seed", 0));
    c.k = ov.k.value_or(get_or<std::size_t>(raw, "k", 10));
    c.delta = ov.delta.value_or(get_or<double>(raw, "delta", 0.9));
    c.feature_set = feature_set_from_string(ov.feature_set.value_or(get_or<std::string>(raw, "feature_set", "All")));
    if (c.k < 1) throw ConfigError("k must be at least 1");
    if (!(c.delta >= 0 && c.delta <= 1)) throw ConfigError("delta must lie in [0, 1]");

    const json sim = raw.value("simulation", json::object());
    c.sim_patients = get_or<std::size_t>(sim, "n_patients", 50);

    const json cl = raw.value("classifier", json::object());
    c.train.C = get_or<double>(cl, "C", 0.1);
    c.train.max_iter = get_or<int>(cl, "max_iter", 10000);
    c.train_ratio = get_or<double>(cl, "train_ratio", 0.7);
    c.train.seed = c.seed;
    if (!(c.train.C > 0)) throw ConfigError("classifier.C must be positive");

    const json syn = raw.value("synthetic", json::object());
    c.synth_cases = get_or<std::size_t>(syn, "n_cases", 20);
    c.exemplar_count = get_or<std::size_t>(syn, "exemplar_count", 3);
    c.budget_factor = get_or<std::size_t>(syn, "budget_factor", 5);
    c.generator = get_or<std::string>(syn, "generator", "");
    c.evaluator = get_or<std::string>(syn, "evaluator", "");

    const json disc = raw.value("discovery", json::object());
    c.top_n = get_or<std::size_t>(disc, "top_n", 5);
    c.page_level = get_or<bool>(disc, "page_level", false);

    const json remote = raw.value("remote", json::object());
    ChatConfig chat;
    chat.base_url = get_or<std::string>(remote, "endpoint", "");
    chat.path = get_or<std::string>(remote, "path", "/v1/chat/completions");
    chat.api_key_env = get_or<std::string>(remote, "api_key_env", "");
    chat.concurrency = get_or<int>(remote, "concurrency", 4);
    chat.requests_per_second = get_or<double>(remote, "requests_per_second", 0.0);
    chat.timeout = std::chrono::seconds(get_or<int>(remote, "timeout_s", 120));
    const json retry = remote.value("retry", json::object());
    chat.retry.max_attempts = get_or<int>(retry, "max_attempts", 3);
    chat.retry.initial_backoff = std::chrono::milliseconds(get_or<int>(retry, "initial_backoff_ms", 1000));
    chat.retry.multiplier = get_or<double>(retry, "multiplier", 2.0);
    chat.retry.jitter = get_or<double>(retry, "jitter", 0.25);

    if (!raw.contains("models") || !raw["models"].is_array() || raw["models"].empty())
      throw ConfigError("config needs a nonempty 'models' array");
    std::set<std::string> ids;
    json roster = json::array();
    for (const auto& m : raw["models"]) {
      PredictorSpec s;
      s.model_id = get_or<std::string>(m, "id", "");
      if (s.model_id.empty()) throw ConfigError("every model needs an 'id'");
      if (!ids.insert(s.model_id).second) throw ConfigError("duplicate model id " + s.model_id);
      s.backend = backend_from_string(ov.backend.value_or(get_or<std::string>(m, "backend", "simulated")));
      s.temperature = get_or<double>(m, "temperature", 1.0);
      if (!(s.temperature >= 0)) throw ConfigError("temperature must be non-negative for " + s.model_id);
      s.sim.accuracy = get_or<double>(m, "accuracy", 1.0);
      s.sim.consistency = get_or<double>(m, "consistency", 0.0);
      s.sim.decoys = get_or<int>(m, "decoys", 1);
      s.sim.flip_rate = get_or<double>(m, "flip_rate", 0.0);
      s.sim.preference_accuracy = get_or<double>(m, "preference_accuracy", 1.0);
      s.sim.seed = c.seed;
      try {
        s.sim.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(s.model_id + ": " + e.what());
      }
      s.remote = chat;
      s.remote.model = get_or<std::string>(m, "remote_model", s.model_id);
      if (m.contains("endpoint")) s.remote.base_url = get_or<std::string>(m, "endpoint", "");
      const auto cache = get_or<std::string>(m, "cache", "");
      s.cache_path = cache.empty() ? out_dir / "cache" / (s.model_id + ".jsonl") : base / cache;
      if (s.backend == Backend::remote && s.remote.base_url.empty())
        throw ConfigError("remote backend for " + s.model_id + " needs an endpoint");

      json e = {{"id", s.model_id},           {"backend", to_string(s.backend)},
                {"temperature", s.temperature}, {"accuracy", s.sim.accuracy},
                {"consistency", s.sim.consistency}, {"decoys", s.sim.decoys},
                {"flip_rate", s.sim.flip_rate}, {"preference_accuracy", s.sim.preference_accuracy},
                {"remote_model", s.remote.model}, {"cache", cache}};
      roster.push_back(std::move(e));
      c.roster.push_back(std::move(s));
    }

    std::vector<std::string> selected;
    if (ov.models) {
      selected = *ov.models;
    } else if (raw.contains("active_models")) {
      selected = get_or<std::vector<std::string>>(raw, "active_models", {});
    }
    if (selected.empty()) {
      c.models = c.roster;
    } else {
      for (const auto& id : selected) c.models.push_back(c.find_model(id));
    }
    if (!c.generator.empty()) c.find_model(c.generator);
    if (!c.evaluator.empty()) c.find_model(c.evaluator);
    if (!c.generator.empty() && c.generator == c.evaluator)
      throw ConfigError("synthetic generator and evaluator must be different models");

    json assets = {{"graph", file_sha256_hex(c.graph_path)},
                   {"prompts", dir_hash(c.prompts_dir)},
                   {"exemplars", dir_hash(c.exemplars_dir)}};
    if (c.cohort_path) assets["cohort"] = file_sha256_hex(*c.cohort_path);

    std::vector<std::string> active;
    for (const auto& m : c.models) active.push_back(m.model_id);
    c.effective = {
        {"graph", graph_rel},
        {"graph_format", gf},
        {"cohort", cohort_rel},
        {"seed", c.seed},
        {"k", c.k},
        {"delta", c.delta},
        {"feature_set", to_string(c.feature_set)},
        {"simulation", {{"n_patients", c.sim_patients}}},
        {"classifier", {{"C", c.train.C}, {"max_iter", c.train.max_iter}, {"train_ratio", c.train_ratio}}},
        {"synthetic",
         {{"n_cases", c.synth_cases},
          {"exemplar_count", c.exemplar_count},
          {"budget_factor", c.budget_factor},
          {"generator", c.generator},
          {"evaluator", c.evaluator}}},
        {"discovery", {{"top_n", c.top_n}, {"page_level", c.page_level}}},
        {"remote",
         {{"endpoint", chat.base_url},
          {"path", chat.path},
          {"api_key_env", chat.api_key_env},
          {"concurrency", chat.concurrency},
          {"requests_per_second", chat.requests_per_second},
          {"retry",
           {{"max_attempts", chat.retry.max_attempts},
            {"initial_backoff_ms", chat.retry.initial_backoff.count()},
            {"multiplier", chat.retry.multiplier},
            {"jitter", chat.retry.jitter}}}}},
        {"models", roster},
        {"active_models", active},
        {"assets", assets},
    };
    c.hash = sha256_hex(c.effective.dump());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return c;
}

Pipeline::Pipeline(PipelineConfig config, fs::path out_dir, bool force)
    : cfg_(std::move(config)), out_(std::move(out_dir)), force_(force) {
  log = [](const std::string& msg) { std::cerr << msg << "\n"; };
  try {
    graph_ = load_graph(cfg_.graph_path);
    prompts_ = PromptSet::load(cfg_.prompts_dir);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  prompts_.graph_format = cfg_.graph_format;
  fs::create_directories(out_);
}

const std::vector<std::string>& Pipeline::stages() { return kStages; }

json Pipeline::load_manifest() const {
  const auto p = artifact("manifest.json");
  if (!fs::exists(p)) return json::object();
  try {
    return json::parse(read_file(p));
  } catch (const json::exception& e) {
    throw ArtifactError("unreadable manifest " + p.string() + ": " + e.what());
  }
}

void Pipeline::save_manifest(const json& m) const { write_file(artifact("manifest.json"), m.dump(2) + "\n"); }

void Pipeline::require(const std::string& name) const {
  const auto producer = producing_stage(name);
  if (!fs::exists(artifact(name)))
    throw ArtifactError("missing artifact " + name + "; run the '" + producer + "' stage first");
  const auto m = load_manifest();
  if (!m.contains("stages") || !m["stages"].contains(producer)) return;
  const json outputs = m["stages"][producer].value("outputs", json::object());
  if (outputs.contains(name) && outputs[name].get<std::string>() != file_sha256_hex(artifact(name)))
    throw ArtifactError("hash mismatch: " + name + " changed since the '" + producer + "' stage wrote it");
}

std::vector<std::string> Pipeline::stage_inputs(const std::string& stage) const {
  if (stage == "ingest") return {};
  if (stage == "rollout") return {"cohort.jsonl"};
  if (stage == "proxy-build") return {"cohort.jsonl", "rollouts.jsonl"};
  if (stage == "proxy-score") return {"cohort.jsonl", "rollouts.jsonl", "benchmarks/index.json", "synth_rollouts.jsonl"};
  if (stage == "fidelity") return {"scores.json"};
  if (stage == "features") {
    std::vector<std::string> in = {"cohort.jsonl", "rollouts.jsonl"};
    const auto cols = feature_indices(cfg_.feature_set);
    if (std::any_of(cols.begin(), cols.end(), [](std::size_t c) { return c >= 2 && c <= 7; }))
      in.push_back("scores.json");
    return in;
  }
  if (stage == "train") return {"features.csv"};
  if (stage == "evaluate") return {"features.csv", "classifier.json", "split.json"};
  if (stage == "cluster" || stage == "errors") return {"cohort.jsonl", "rollouts.jsonl"};
  if (stage == "report") return {"scores.json", "fidelity.json", "evaluation.json", "clusters.json", "confusion.json"};
  throw ConfigError("unknown stage '" + stage + "'");
}

void Pipeline::run(const std::string& stage) {
  const auto inputs = stage_inputs(stage);
  for (const auto& in : inputs) require(in);
  json input_hashes = json::object();
  for (const auto& in : inputs) input_hashes[in] = file_sha256_hex(artifact(in));

  auto manifest = load_manifest();
  if (!force_ && manifest.contains("stages") && manifest["stages"].contains(stage)) {
    const auto& rec = manifest["stages"][stage];
    bool fresh = rec.value("config_hash", "") == cfg_.hash && rec.value("inputs", json()) == input_hashes;
    const json outputs = rec.value("outputs", json::object());
    for (const auto& [name, hash] : outputs.items()) {
      if (!fresh) break;
      fresh = fs::exists(artifact(name)) && file_sha256_hex(artifact(name)) == hash.get<std::string>();
    }
    if (fresh) {
      log("[" + stage + "] up to date");
      return;
    }
  }

  const auto started = utc_timestamp();
  log("[" + stage + "] running");
  const auto outputs = execute(stage);
  json output_hashes = json::object();
  for (const auto& o : outputs) output_hashes[o] = file_sha256_hex(artifact(o));

  manifest = load_manifest();
  manifest["run_id"] = sha256_hex(cfg_.hash + ":" + std::to_string(cfg_.seed)).substr(0, 16);
  manifest["config_hash"] = cfg_.hash;
  manifest["seed"] = cfg_.seed;
  manifest["stages"][stage] = {{"config_hash", cfg_.hash},
                               {"seed", derive_seed(cfg_.seed, stage, "")},
                               {"inputs", input_hashes},
                               {"outputs", output_hashes},
                               {"started", started},
                               {"finished", utc_timestamp()}};
  save_manifest(manifest);
}

void Pipeline::run_all() {
  for (const auto& s : kStages) run(s);
}

std::vector<std::string> Pipeline::execute(const std::string& stage) {
  if (stage == "ingest") return ingest();
  if (stage == "rollout") return rollout();
  if (stage == "proxy-build") return proxy_build();
  if (stage == "proxy-score") return proxy_score();
  if (stage == "fidelity") return fidelity();
  if (stage == "features") return features();
  if (stage == "train") return train_stage();
  if (stage == "evaluate") return evaluate_stage();
  if (stage == "cluster") return cluster();
  if (stage == "errors") return errors();
  if (stage == "report") return report();
  throw ConfigError("unknown stage '" + stage + "'");
}

std::unique_ptr<Predictor> Pipeline::predictor(const PredictorSpec& spec) const {
  try {
    return make_predictor(spec);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::vector<std::string> Pipeline::ingest() {
  std::vector<PatientCase> cases;
  if (cfg_.cohort_path) {
    try {
      cases = load_cohort(*cfg_.cohort_path, &graph_);
    } catch (const std::exception& e) {
      throw ConfigError("cohort " + cfg_.cohort_path->string() + ": " + e.what());
    }
  } else {
    const bool all_sim = std::all_of(cfg_.models.begin(), cfg_.models.end(),
                                     [](const PredictorSpec& s) { return s.backend == Backend::simulated; });
    if (!all_sim) throw ConfigError("no cohort configured; only simulated runs can generate one");
    cases = simulate_cases(graph_, cfg_.sim_patients, cfg_.seed);
  }
  if (cases.empty()) throw ConfigError("cohort is empty");
  write_cohort(artifact("cohort.jsonl"), cases);
  log("[ingest] " + std::to_string(cases.size()) + " patients");
  return {"cohort.jsonl"};
}

namespace {

void sample_all(const std::vector<PredictorSpec>& models, const std::vector<PatientCase>& cases,
                const GuidelineGraph& graph, const PromptSet& prompts, std::size_t k, Seed seed,
                const fs::path& target, const std::function<std::unique_ptr<Predictor>(const PredictorSpec&)>& make) {
  const fs::path tmp = target.string() + ".partial";
  fs::remove(tmp);
  RolloutStore store(tmp);
  for (const auto& spec : models) {
    auto p = make(spec);
    for (const auto& c : cases) sample_rollouts(*p, graph, c, k, rollout_seed(seed, spec.model_id, c.patient_id), prompts, &store);
  }
  if (!fs::exists(tmp)) write_file(tmp, "");
  fs::rename(tmp, target);
}

}  // namespace

std::vector<std::string> Pipeline::rollout() {
  const auto cases = load_cohort(artifact("cohort.jsonl"), &graph_);
  sample_all(cfg_.models, cases, graph_, prompts_, cfg_.k, cfg_.seed, artifact("rollouts.jsonl"),
             [this](const PredictorSpec& s) { return predictor(s); });
  log("[rollout] " + std::to_string(cfg_.models.size() * cases.size()) + " rollout sets, k=" + std::to_string(cfg_.k));
  return {"rollouts.jsonl"};
}

std::vector<std::string> Pipeline::proxy_build() {
  const auto sets = load_rollouts(artifact("rollouts.jsonl"), &graph_);
  const auto grouped = by_model(sets);
  std::vector<std::string> outputs;
  json index = {{"benchmarks", json::array()}};
  auto emit = [&](const ProxyBenchmark& b, const std::string& name) {
    const auto rel = "benchmarks/" + name + ".jsonl";
    write_benchmark(artifact(rel), b);
    outputs.push_back(rel);
    outputs.push_back(rel + ".manifest.json");
    index["benchmarks"].push_back({{"file", rel},
                                   {"method", to_string(b.method)},
                                   {"source_model", b.source_model},
                                   {"entries", b.entries.size()},
                                   {"zero_scored", b.zero_scored.size()},
                                   {"sha256", file_sha256_hex(artifact(rel))}});
  };

  for (const auto& spec : cfg_.models) {
    auto it = grouped.find(spec.model_id);
    if (it == grouped.end()) throw ArtifactError("rollouts.jsonl has no rollouts for " + spec.model_id);
    emit(build_self_benchmark(it->second, MetricKind::path_overlap, cfg_.delta), "self_overlap." + spec.model_id);
    emit(build_self_benchmark(it->second, MetricKind::treatment_match, cfg_.delta), "self_treatment." + spec.model_id);
  }
  emit(build_cross_benchmark(sets, MetricKind::path_overlap), "cross_overlap");
  emit(build_cross_benchmark(sets, MetricKind::treatment_match), "cross_treatment");

  std::vector<PatientCase> synth_cases;
  if (!cfg_.generator.empty() && !cfg_.evaluator.empty()) {
    const auto exemplars = load_exemplars(cfg_.exemplars_dir);
    auto gen = predictor(cfg_.find_model(cfg_.generator));
    auto eva = predictor(cfg_.find_model(cfg_.evaluator));
    for (auto mode : {SynthMode::structured, SynthMode::unstructured}) {
      SynthConfig sc{mode, cfg_.synth_cases, cfg_.exemplar_count, cfg_.budget_factor,
                     derive_seed(cfg_.seed, "synthetic", to_string(mode))};
      auto bench = build_synthetic_benchmark(sc, *gen, *eva, graph_, exemplars, prompts_);
      const auto rel = "benchmarks/synth_" + to_string(mode) + ".cases.jsonl";
      write_synthetic(artifact(rel), bench);
      outputs.insert(outputs.end(), {rel, rel + ".audit.jsonl", rel + ".stats.json"});
      log("[proxy-build] synthetic " + to_string(mode) + ": " + std::to_string(bench.cases.size()) + " accepted of " +
          std::to_string(bench.stats.attempts) + " attempts");
      if (bench.stats.budget_exhausted) log("[proxy-build] warning: attempt budget exhausted");
      const auto proxy = bench.to_proxy();
      emit(proxy, "synth_" + to_string(mode));
      index["synthetic"][to_string(mode)] = bench.stats.to_json();
      for (const auto& c : bench.cases) synth_cases.push_back({c.case_id, c.note_text, std::nullopt, std::nullopt});
    }
  } else {
    log("[proxy-build] no synthetic generator/evaluator configured; skipping synthetic benchmarks");
  }
  sample_all(cfg_.models, synth_cases, graph_, prompts_, cfg_.k, derive_seed(cfg_.seed, "synthetic-rollouts", ""),
             artifact("synth_rollouts.jsonl"), [this](const PredictorSpec& s) { return predictor(s); });
  outputs.push_back("synth_rollouts.jsonl");
  write_file(artifact("benchmarks/index.json"), index.dump(2) + "\n");
  outputs.push_back("benchmarks/index.json");
  return outputs;
}

std::vector<std::string> Pipeline::proxy_score() {
  const auto cases = load_cohort(artifact("cohort.jsonl"), &graph_);
  const auto real = by_model(load_rollouts(artifact("rollouts.jsonl"), &graph_));
  const auto synth = by_model(load_rollouts(artifact("synth_rollouts.jsonl"), &graph_));
  const auto index = json::parse(read_file(artifact("benchmarks/index.json")));

  json scores = json::object();
  for (auto metric : {MetricKind::treatment_match, MetricKind::path_overlap}) {
    json& table = scores[to_string(metric)];
    for (const auto& spec : cfg_.models) {
      const auto& id = spec.model_id;
      json row = {{"proxy", json::object()}};
      try {
        const auto t = score_model_on_truth(real.at(id), cases, metric);
        row["true"] = {{"mean", t.mean}, {"sem", t.sem}, {"n_cases", t.n_cases}};
      } catch (const std::invalid_argument&) {
        row["true"] = nullptr;
      }
      for (const auto& b : index["benchmarks"]) {
        const auto rel = b["file"].get<std::string>();
        if (file_sha256_hex(artifact(rel)) != b["sha256"].get<std::string>())
          throw ArtifactError("hash mismatch: " + rel + " changed since the 'proxy-build' stage wrote it");
        const auto method = proxy_method_from_string(b["method"].get<std::string>());
        if (is_self(method) && b["source_model"] != id) continue;
        const bool treatment_only = method == ProxyMethod::self_treatment || method == ProxyMethod::cross_treatment;
        if (metric == MetricKind::path_overlap && treatment_only) continue;
        const auto bench = load_benchmark(artifact(rel));
        const bool synthetic = method == ProxyMethod::synth_structured || method == ProxyMethod::synth_unstructured;
        const auto& source = synthetic ? synth : real;
        auto it = source.find(id);
        if (it == source.end() || (bench.entries.empty() && bench.zero_scored.empty())) continue;
        try {
          const auto s = score_model_on_proxy(it->second, bench, metric);
          row["proxy"][to_string(method)] = {
              {"mean", s.mean}, {"sem", s.sem}, {"n_cases", s.n_cases}, {"n_zero_scored", s.n_zero_scored}};
        } catch (const std::invalid_argument& e) {
          log("[proxy-score] " + id + " on " + rel + ": " + e.what());
        }
      }
      table[id] = std::move(row);
    }
  }
  write_file(artifact("scores.json"), scores.dump(2) + "\n");
  return {"scores.json"};
}

namespace {

std::vector<ModelScoreTable> tables_from(const json& scores) {
  std::vector<ModelScoreTable> tables;
  for (const auto& [metric, rows] : scores.items()) {
    ModelScoreTable t;
    t.metric = metric_from_string(metric);
    for (const auto& [model, row] : rows.items()) {
      if (!row["true"].is_null()) t.set_true(model, row["true"]["mean"].get<double>());
      for (const auto& [method, s] : row["proxy"].items()) t.set_proxy(model, method, s["mean"].get<double>());
    }
    tables.push_back(std::move(t));
  }
  return tables;
}

}  // namespace

std::vector<std::string> Pipeline::fidelity() {
  const auto tables = tables_from(json::parse(read_file(artifact("scores.json"))));
  json report = json::object();
  for (const auto& t : tables) {
    ModelScoreTable usable = t;
    for (const auto& method : t.methods()) {
      std::size_t n = 0;
      for (const auto& [_, row] : t.rows) n += row.true_score && row.proxy.count(method);
      if (n < 2) {
        log("[fidelity] " + to_string(t.metric) + "/" + method + ": fewer than 2 scored models, skipped");
        for (auto& [_, row] : usable.rows) row.proxy.erase(method);
      }
    }
    if (usable.methods().empty()) continue;
    const ModelScoreTable one[] = {usable};
    report.update(fidelity_report(one));
  }
  if (report.empty())
    throw ArtifactError("no proxy method has true and proxy scores for 2 or more models; check the cohort annotations");
  write_file(artifact("fidelity.json"), report.dump(2) + "\n");
  return {"fidelity.json"};
}

std::vector<std::string> Pipeline::features() {
  const auto cases = load_cohort(artifact("cohort.jsonl"), &graph_);
  const auto sets = load_rollouts(artifact("rollouts.jsonl"), &graph_);
  BenchScores bench;
  if (fs::exists(artifact("scores.json"))) {
    const auto scores = json::parse(read_file(artifact("scores.json")));
    const std::pair<ProxyMethod, MetricKind> wanted[] = {
        {ProxyMethod::synth_structured, MetricKind::treatment_match},
        {ProxyMethod::synth_unstructured, MetricKind::treatment_match},
        {ProxyMethod::self_overlap, MetricKind::path_overlap},
        {ProxyMethod::self_treatment, MetricKind::treatment_match},
        {ProxyMethod::cross_overlap, MetricKind::path_overlap},
        {ProxyMethod::cross_treatment, MetricKind::treatment_match},
    };
    for (const auto& [method, metric] : wanted) {
      const auto& rows = scores[to_string(metric)];
      for (const auto& [model, row] : rows.items()) {
        const auto m = to_string(method);
        if (row["proxy"].contains(m)) bench[model][method] = row["proxy"][m]["mean"].get<double>();
      }
    }
  }
  std::vector<RolloutSet> selected;
  std::set<std::string> active;
  for (const auto& m : cfg_.models) active.insert(m.model_id);
  for (const auto& s : sets)
    if (active.count(s.model_id)) selected.push_back(s);
  FeatureTable table;
  try {
    table = extract_features(selected, cases, bench, cfg_.feature_set);
  } catch (const std::invalid_argument& e) {
    throw ArtifactError(std::string(e.what()) + " (run 'proxy-score' for benchmark features)");
  }
  write_feature_csv(artifact("features.csv"), table);
  return {"features.csv"};
}

std::vector<std::string> Pipeline::train_stage() {
  const auto table = load_feature_csv(artifact("features.csv"));
  std::vector<std::size_t> labeled;
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    if (table.rows[i].label) labeled.push_back(i);
  const auto usable = table.subset(labeled);
  const auto split = stratified_split(usable, cfg_.train_ratio, cfg_.seed);
  const auto tr = usable.subset(split.train_rows);
  const auto y = tr.labels();
  const auto clf = train(tr.matrix(), y, usable.feature_set, cfg_.train);
  log("[train] " + std::to_string(tr.rows.size()) + " rows, " + std::to_string(clf.iterations) +
      " Newton steps, |grad| " + fmt(clf.gradient_norm, "%.2e"));
  write_file(artifact("classifier.json"), clf.to_json().dump(2) + "\n");
  json sj = {{"ratio", cfg_.train_ratio},
             {"seed", cfg_.seed},
             {"train_patients", split.train_patients},
             {"test_patients", split.test_patients}};
  write_file(artifact("split.json"), sj.dump(2) + "\n");
  return {"classifier.json", "split.json"};
}

std::vector<std::string> Pipeline::evaluate_stage() {
  const auto table = load_feature_csv(artifact("features.csv"));
  const auto clf = TrainedClassifier::from_json(json::parse(read_file(artifact("classifier.json"))));
  const auto split = json::parse(read_file(artifact("split.json")));
  const auto test = split["test_patients"].get<std::set<std::string>>();
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    if (table.rows[i].label && test.count(table.rows[i].patient_id)) rows.push_back(i);
  const auto t = table.subset(rows);
  if (t.feature_set != clf.feature_set) throw ArtifactError("features.csv and classifier.json use different feature sets");
  const auto y = t.labels();
  const auto e = evaluate(clf, t.matrix(), y);
  json points = json::array();
  for (const auto& p : e.roc.points)
    points.push_back({std::isinf(p.threshold) ? json("inf") : json(p.threshold), p.fpr, p.tpr});
  json out = {{"feature_set", to_string(clf.feature_set)},
              {"n_test_rows", y.size()},
              {"auroc", e.auroc},
              {"f1", e.f1},
              {"confusion", {{"tp", e.confusion.tp}, {"fp", e.confusion.fp}, {"fn", e.confusion.fn}, {"tn", e.confusion.tn}}},
              {"roc", points}};
  write_file(artifact("evaluation.json"), out.dump(2) + "\n");
  write_roc_csv(artifact("roc.csv"), e.roc);
  write_file(artifact("roc.svg"), roc_svg(e.roc, "Meta-classifier (" + to_string(clf.feature_set) + ")"));
  log("[evaluate] AUROC " + fmt(e.auroc) + ", F1 " + fmt(e.f1));
  return {"evaluation.json", "roc.csv", "roc.svg"};
}

std::vector<std::string> Pipeline::cluster() {
  const auto cases = load_cohort(artifact("cohort.jsonl"), &graph_);
  const auto sets = load_rollouts(artifact("rollouts.jsonl"), &graph_);
  const auto table = extract_features(sets, cases, {}, FeatureSet::base_aggregated);
  const auto x = table.matrix(kConsistencyColumns);
  bool labeled = std::all_of(table.rows.begin(), table.rows.end(), [](const FeatureRow& r) { return r.label.has_value(); });
  std::vector<int> y;
  if (labeled) y = table.labels();
  const auto sep = kmeans_separate(x, labeled ? std::optional<std::span<const int>>(y) : std::nullopt,
                                   derive_seed(cfg_.seed, "cluster", ""));

  std::string csv = "model_id,patient_id,cluster,predicted_correct,label\n";
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    csv += r.model_id + "," + r.patient_id + "," + std::to_string(sep.clusters.assignment[static_cast<Eigen::Index>(i)]) +
           "," + std::to_string(sep.predicted[i]) + "," + (r.label ? std::to_string(*r.label) : "") + "\n";
  }
  json summary = {{"mode", labeled ? "evaluation" : "deployment"},
                  {"features", {"self_path_overlap", "self_treatment_match", "cross_path_agreement",
                                "cross_treatment_agreement"}},
                  {"correct_cluster", sep.correct_cluster},
                  {"objective", sep.clusters.objective},
                  {"restart", sep.clusters.restart},
                  {"iterations", sep.clusters.iterations},
                  {"f1", sep.f1 ? json(*sep.f1) : json()}};
  csv += "# summary: mode=" + summary["mode"].get<std::string>() + " correct_cluster=" +
         std::to_string(sep.correct_cluster) + " objective=" + fmt(sep.clusters.objective, "%.6f") +
         (sep.f1 ? " f1=" + fmt(*sep.f1, "%.4f") : "") + "\n";
  write_file(artifact("clusters.csv"), csv);
  write_file(artifact("clusters.json"), summary.dump(2) + "\n");
  if (sep.f1) log("[cluster] F1 " + fmt(*sep.f1));
  return {"clusters.csv", "clusters.json"};
}

std::vector<std::string> Pipeline::errors() {
  const auto cases = load_cohort(artifact("cohort.jsonl"), &graph_);
  const auto grouped = by_model(load_rollouts(artifact("rollouts.jsonl"), &graph_));
  json out = {{"top_n", cfg_.top_n}, {"granularity", cfg_.page_level ? "page" : "node"}, {"models", json::object()}};
  for (const auto& spec : cfg_.models) {
    auto it = grouped.find(spec.model_id);
    if (it == grouped.end()) continue;
    const auto ranked = mine_confusion_points(it->second, cfg_.page_level);
    const auto errs = human_error_nodes(it->second, cases);
    const auto cov = error_coverage(ranked, errs, cfg_.top_n, cfg_.page_level);
    const std::vector<ConfusionPoint> top(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(
                                                                           std::min(cfg_.top_n, ranked.size())));
    out["models"][spec.model_id] = {{"ranked", confusion_report(ranked)},
                                    {"top", confusion_report(top)},
                                    {"error_instances", errs.size()},
                                    {"coverage", cov ? json(*cov) : json()}};
  }
  write_file(artifact("confusion.json"), out.dump(2) + "\n");
  return {"confusion.json"};
}

namespace {

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

std::string report_svg(const json& report) {
  std::string body;
  auto text = [&](double x, double y, const std::string& s, int size = 11, const char* anchor = "start") {
    body += "<text x=\"" + fmt(x, "%.1f") + "\" y=\"" + fmt(y, "%.1f") + "\" font-family=\"sans-serif\" font-size=\"" +
            std::to_string(size) + "\" text-anchor=\"" + anchor + "\">" + svg_escape(s) + "</text>\n";
  };
  double y = 24;
  text(16, y, "Benchmark fidelity (Spearman / RMSE vs. true scores)", 14);
  y += 22;
  const auto& fid = report["fidelity"];
  std::vector<std::string> metrics;
  std::set<std::string> methods;
  for (const auto& [metric, rows] : fid.items()) {
    metrics.push_back(metric);
    for (const auto& [m, _] : rows.items()) methods.insert(m);
  }
  for (std::size_t j = 0; j < metrics.size(); ++j) text(200 + 170.0 * static_cast<double>(j), y, metrics[j], 11, "middle");
  y += 8;
  for (const auto& m : methods) {
    text(16, y + 15, m);
    for (std::size_t j = 0; j < metrics.size(); ++j) {
      const double x = 120 + 170.0 * static_cast<double>(j);
      const auto& cell = fid[metrics[j]];
      std::string label = "n/a";
      std::string fill = "#eeeeee";
      if (cell.contains(m) && !cell[m]["spearman"].is_null()) {
        const double rho = cell[m]["spearman"].get<double>();
        const int shade = static_cast<int>(255 - 120 * std::max(0.0, rho));
        char hex[8];
        std::snprintf(hex, sizeof hex, "#%02x%02xff", shade, shade);
        fill = hex;
        label = fmt(rho, "%.2f") + " / " + fmt(cell[m]["rmse"].get<double>(), "%.3f");
      }
      body += "<rect x=\"" + fmt(x, "%.1f") + "\" y=\"" + fmt(y, "%.1f") + "\" width=\"160\" height=\"22\" fill=\"" + fill +
              "\" stroke=\"#999\"/>\n";
      text(x + 80, y + 15, label, 11, "middle");
    }
    y += 26;
  }

  y += 24;
  text(16, y, "Meta-classifier ROC (" + report["meta_classifier"]["feature_set"].get<std::string>() + ", AUROC " +
                  fmt(report["meta_classifier"]["auroc"].get<double>()) + ")",
       14);
  const double top = y + 12, size = 220;
  body += "<rect x=\"40\" y=\"" + fmt(top, "%.1f") + "\" width=\"220\" height=\"220\" fill=\"none\" stroke=\"#888\"/>\n";
  body += "<line x1=\"40\" y1=\"" + fmt(top + size, "%.1f") + "\" x2=\"260\" y2=\"" + fmt(top, "%.1f") +
          "\" stroke=\"#bbb\" stroke-dasharray=\"4\"/>\n";
  std::string pts;
  for (const auto& p : report["meta_classifier"]["roc"])
    pts += fmt(40 + p[1].get<double>() * size, "%.1f") + "," + fmt(top + (1 - p[2].get<double>()) * size, "%.1f") + " ";
  body += "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";

  double cy = top;
  text(300, cy, "Top confusion points", 14);
  for (const auto& [model, info] : report["confusion_top"].items()) {
    cy += 20;
    const auto cov = info["coverage"];
    text(300, cy, model + (cov.is_null() ? "" : "  (error coverage " + fmt(cov.get<double>()) + ")"), 12);
    for (const auto& p : info["top"]) {
      cy += 15;
      text(316, cy, p["node"].get<std::string>() + "  x" + std::to_string(p["divergence_count"].get<std::size_t>()), 11);
    }
  }
  const double height = std::max(top + size, cy) + 30;
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"680\" height=\"" + fmt(height, "%.0f") + "\">\n" + body +
         "</svg>\n";
}

}  // namespace

std::vector<std::string> Pipeline::report() {
  const auto scores = json::parse(read_file(artifact("scores.json")));
  const auto fid = json::parse(read_file(artifact("fidelity.json")));
  const auto eval = json::parse(read_file(artifact("evaluation.json")));
  const auto clusters = json::parse(read_file(artifact("clusters.json")));
  const auto conf = json::parse(read_file(artifact("confusion.json")));

  json confusion_top = json::object();
  for (const auto& [model, info] : conf["models"].items())
    confusion_top[model] = {{"top", info["top"]}, {"coverage", info["coverage"]}};
  json artifacts = json::object();
  for (const auto& in : stage_inputs("report")) artifacts[in] = file_sha256_hex(artifact(in));
  std::vector<std::string> models;
  for (const auto& m : cfg_.models) models.push_back(m.model_id);

  json report = {{"config_hash", cfg_.hash},
                 {"seed", cfg_.seed},
                 {"models", models},
                 {"model_scores", scores},
                 {"fidelity", fid},
                 {"meta_classifier",
                  {{"feature_set", eval["feature_set"]},
                   {"auroc", eval["auroc"]},
                   {"f1", eval["f1"]},
                   {"confusion", eval["confusion"]},
                   {"roc", eval["roc"]}}},
                 {"clusters", clusters},
                 {"confusion_top", confusion_top},
                 {"artifacts", artifacts}};
  report["content_digest"] = content_digest(report.dump());
  write_file(artifact("report.json"), report.dump(2) + "\n");
  write_file(artifact("report.svg"), report_svg(report));
  return {"report.json", "report.svg"};
}

}  // namespace guidebench
