// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidebench/predictor.hpp"

#include <atomic>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <set>
#include <thread>

#include "guidebench/digest.hpp"
#include "guidebench/simulation.hpp"

namespace guidebench {

nlohmann::json to_json(const PatientCase& c) {
  nlohmann::json j = {{"patient_id", c.patient_id}, {"note_text", c.note_text}};
  if (c.annotated_path) j["annotated_path"] = c.annotated_path->render();
  if (c.compliant) j["compliant"] = *c.compliant;
  return j;
}

PatientCase patient_from_json(const nlohmann::json& j, const GuidelineGraph* graph) {
  PatientCase c;
  try {
    c.patient_id = j.at("patient_id").get<std::string>();
    c.note_text = j.at("note_text").get<std::string>();
    if (j.contains("annotated_path") && !j["annotated_path"].is_null()) {
      const auto text = j["annotated_path"].get<std::string>();
      c.annotated_path = graph ? parse_path_string(text, *graph) : parse_path_string(text);
      if (graph) {
        const auto report = validate_path(*c.annotated_path, *graph);
        if (!report.unknown_nodes.empty())
          throw std::invalid_argument("annotated path for " + c.patient_id + " names unknown node " +
                                      report.unknown_nodes.front().render());
      }
    }
    if (j.contains("compliant") && !j["compliant"].is_null()) c.compliant = j["compliant"].get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad patient record: ") + e.what());
  } catch (const PathError& e) {
    throw std::invalid_argument("bad annotated path for " + c.patient_id + ": " + e.what());
  }
  if (c.patient_id.empty()) throw std::invalid_argument("patient record without id");
  if (c.note_text.empty()) throw std::invalid_argument("empty note for " + c.patient_id);
  return c;
}

void write_cohort(const std::filesystem::path& path, std::span<const PatientCase> cases) {
  std::string out;
  for (const auto& c : cases) out += to_json(c).dump() + "\n";
  write_file(path, out);
}

std::vector<PatientCase> load_cohort(const std::filesystem::path& path, const GuidelineGraph* graph) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open cohort " + path.string());
  std::vector<PatientCase> cases;
  std::set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto c = patient_from_json(nlohmann::json::parse(line), graph);
    if (!seen.insert(c.patient_id).second)
      throw std::invalid_argument("duplicate patient id " + c.patient_id);
    cases.push_back(std::move(c));
  }
  return cases;
}

std::string to_string(Backend b) {
  switch (b) {
    case Backend::remote: return "remote";
    case Backend::replay: return "replay";
    case Backend::simulated: return "simulated";
  }
  return "?";
}

Backend backend_from_string(const std::string& s) {
  if (s == "remote") return Backend::remote;
  if (s == "replay") return Backend::replay;
  if (s == "simulated") return Backend::simulated;
  throw std::invalid_argument("unknown backend '" + s + "'");
}

std::string to_string(Role r) {
  switch (r) {
    case Role::predict_path: return "predict_path";
    case Role::fill_structured: return "fill_structured";
    case Role::reconstruct_path: return "reconstruct_path";
    case Role::write_note: return "write_note";
    case Role::choose_preference: return "choose_preference";
  }
  return "?";
}

void SimulationParams::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
  };
  prob(accuracy, "accuracy");
  // q is clamped, so slopes above 1 are well defined (steeper per-patient difficulty).
  if (!(consistency >= 0.0 && std::isfinite(consistency)))
    throw std::invalid_argument("consistency must be a finite value >= 0");
  prob(flip_rate, "flip_rate");
  prob(preference_accuracy, "preference_accuracy");
  if (decoys < 1) throw std::invalid_argument("decoys must be at least 1");
}

std::string replay_key(const std::string& model_id, Role role, const std::string& prompt, Seed seed) {
  std::string buf = model_id;
  buf += '\0';
  buf += to_string(role);
  buf += '\0';
  buf += prompt;
  buf += '\0';
  buf += std::to_string(seed);
  return sha256_hex(buf);
}

ReplayCache::ReplayCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    entries_.insert_or_assign(j.at("key").get<std::string>(),
                              Completion{j.at("raw_text").get<std::string>(), j.value("ts", "")});
  }
}

std::optional<Completion> ReplayCache::lookup(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ReplayCache::store(const std::string& key, const std::string& model_id, Role role, Seed seed,
                        const Completion& completion) {
  nlohmann::json j = {{"key", key},           {"model_id", model_id},
                      {"role", to_string(role)}, {"seed", seed},
                      {"raw_text", completion.text}, {"ts", completion.ts}};
  std::lock_guard lock(mu_);
  if (!path_.parent_path().empty()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app);
  out << j.dump() << "\n";
  if (!out) throw std::runtime_error("cannot append to replay cache " + path_.string());
  entries_.insert_or_assign(key, completion);
}

std::size_t ReplayCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

class RemotePredictor final : public Predictor {
 public:
  explicit RemotePredictor(const PredictorSpec& spec)
      : id_(spec.model_id), temperature_(spec.temperature), client_(spec.remote) {
    if (!spec.cache_path.empty()) cache_.emplace(spec.cache_path);
  }

  const std::string& model_id() const override { return id_; }
  int max_concurrency() const override { return std::max(1, client_.config().concurrency); }

  Completion complete(const Request& request) override {
    const auto key = replay_key(id_, request.role, request.prompt, request.seed);
    if (cache_) {
      if (auto hit = cache_->lookup(key)) return *hit;
    }
    auto reply = client_.complete(request.prompt, temperature_, request.seed);
    Completion c{std::move(reply.text), utc_timestamp()};
    if (cache_) cache_->store(key, id_, request.role, request.seed, c);
    return c;
  }

 private:
  std::string id_;
  double temperature_;
  ChatClient client_;
  std::optional<ReplayCache> cache_;
};

class ReplayPredictor final : public Predictor {
 public:
  explicit ReplayPredictor(const PredictorSpec& spec) : id_(spec.model_id), cache_(spec.cache_path) {
    if (spec.cache_path.empty()) throw std::invalid_argument("replay backend for " + id_ + " needs a cache path");
  }

  const std::string& model_id() const override { return id_; }
  int max_concurrency() const override { return 4; }

  Completion complete(const Request& request) override {
    if (auto hit = cache_.lookup(replay_key(id_, request.role, request.prompt, request.seed))) return *hit;
    throw BackendError("replay cache miss for " + id_ + " (" + to_string(request.role) + ")");
  }

 private:
  std::string id_;
  ReplayCache cache_;
};

}  // namespace

std::unique_ptr<Predictor> make_predictor(const PredictorSpec& spec) {
  if (spec.model_id.empty()) throw std::invalid_argument("predictor without model_id");
  if (!(spec.temperature >= 0)) throw std::invalid_argument("temperature must be non-negative");
  switch (spec.backend) {
    case Backend::remote: return std::make_unique<RemotePredictor>(spec);
    case Backend::replay: return std::make_unique<ReplayPredictor>(spec);
    case Backend::simulated: return std::make_unique<SimulatedPredictor>(spec.model_id, spec.sim);
  }
  throw std::invalid_argument("unknown backend");
}

namespace {

void parse_into(const std::string& raw, const GuidelineGraph& graph, std::optional<GuidelinePath>& path,
                std::string& error) {
  auto ex = extract_last_path(raw);
  if (ex.path) {
    path = resolve_terminal(*ex.path, graph);
  } else {
    path.reset();
    error = ex.error;
  }
}

}  // namespace

namespace {

Prediction predict_with_prompt(Predictor& predictor, const GuidelineGraph& graph, const PatientCase& patient,
                               std::string prompt, Seed seed) {
  Request req;
  req.role = Role::predict_path;
  req.seed = seed;
  req.prompt = std::move(prompt);
  req.context.graph = &graph;
  req.context.patient = &patient;
  auto c = predictor.complete(req);
  Prediction p;
  p.raw_text = std::move(c.text);
  p.ts = std::move(c.ts);
  parse_into(p.raw_text, graph, p.path, p.parse_error);
  return p;
}

std::string render_predict_prompt(const GuidelineGraph& graph, const PatientCase& patient, const PromptSet& prompts) {
  return prompts.predict_path.render({{"graph", prompts.graph_text(graph)}, {"note", patient.note_text}});
}

}  // namespace

Prediction predict_path(Predictor& predictor, const GuidelineGraph& graph, const PatientCase& patient,
                        const PromptSet& prompts, Seed seed) {
  return predict_with_prompt(predictor, graph, patient, render_predict_prompt(graph, patient, prompts), seed);
}

std::vector<GuidelinePath> RolloutSet::paths() const {
  std::vector<GuidelinePath> out;
  out.reserve(rollouts.size());
  for (const auto& r : rollouts) out.push_back(r.parsed.value_or(GuidelinePath{}));
  return out;
}

std::size_t RolloutSet::successes() const {
  std::size_t n = 0;
  for (const auto& r : rollouts) n += !r.failed();
  return n;
}

nlohmann::json rollout_record(const std::string& model_id, const std::string& patient_id, const Rollout& r) {
  nlohmann::json j = {{"model_id", model_id},     {"patient_id", patient_id}, {"rollout_idx", r.index},
                      {"seed", r.seed},           {"raw_text", r.raw_text},
                      {"parsed_path", r.parsed ? nlohmann::json(r.parsed->render()) : nlohmann::json()},
                      {"ts", r.ts}};
  if (!r.parse_error.empty()) j["parse_error"] = r.parse_error;
  if (r.failed()) j["error"] = r.error;
  return j;
}

void RolloutStore::append(const RolloutSet& set) {
  std::string block;
  for (const auto& r : set.rollouts) block += rollout_record(set.model_id, set.patient_id, r).dump() + "\n";
  std::lock_guard lock(mu_);
  if (!path_.parent_path().empty()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  out << block;
  out.flush();
  if (!out) throw StoreError("cannot append to rollout store " + path_.string());
}

std::vector<RolloutSet> load_rollouts(const std::filesystem::path& path, const GuidelineGraph* graph) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StoreError("cannot open rollout store " + path.string());
  std::vector<RolloutSet> sets;
  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      auto j = nlohmann::json::parse(line);
      Rollout r;
      r.index = j.at("rollout_idx").get<std::size_t>();
      r.seed = j.at("seed").get<Seed>();
      r.raw_text = j.at("raw_text").get<std::string>();
      r.ts = j.value("ts", "");
      r.error = j.value("error", "");
      r.parse_error = j.value("parse_error", "");
      const auto& stored = j.at("parsed_path");

      std::optional<GuidelinePath> reparsed;
      std::string reparse_error;
      if (!r.failed()) {
        auto ex = extract_last_path(r.raw_text);
        reparsed = ex.path;
        reparse_error = ex.error;
      } else if (!r.raw_text.empty()) {
        throw StoreError(where + ": failed rollout carries raw text");
      }
      const std::string want = reparsed ? reparsed->render() : "";
      const std::string have = stored.is_null() ? "" : stored.get<std::string>();
      if (want != have || stored.is_null() != !reparsed)
        throw StoreError(where + ": parsed_path disagrees with raw_text re-parse");
      if (reparsed) r.parsed = graph ? resolve_terminal(*reparsed, *graph) : *reparsed;

      auto key = std::make_pair(j.at("model_id").get<std::string>(), j.at("patient_id").get<std::string>());
      auto [it, fresh] = slot.try_emplace(key, sets.size());
      if (fresh) sets.push_back(RolloutSet{key.first, key.second, {}});
      sets[it->second].rollouts.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw StoreError(where + ": " + e.what());
    } catch (const PathError& e) {
      throw StoreError(where + ": " + e.what());
    }
  }
  for (auto& s : sets) {
    std::sort(s.rollouts.begin(), s.rollouts.end(),
              [](const Rollout& a, const Rollout& b) { return a.index < b.index; });
    for (std::size_t i = 0; i < s.rollouts.size(); ++i) {
      if (s.rollouts[i].index != i)
        throw StoreError("rollout indices for " + s.model_id + "/" + s.patient_id + " are not dense and unique");
    }
  }
  return sets;
}

RolloutSet sample_rollouts(Predictor& predictor, const GuidelineGraph& graph, const PatientCase& patient,
                           std::size_t k, Seed seed, const PromptSet& prompts, RolloutStore* store) {
  if (k == 0) throw std::invalid_argument("k must be at least 1");
  RolloutSet set{predictor.model_id(), patient.patient_id, std::vector<Rollout>(k)};
  const std::string prompt = render_predict_prompt(graph, patient, prompts);

  auto run_one = [&](std::size_t i) {
    Rollout& r = set.rollouts[i];
    r.index = i;
    r.seed = derive_seed(seed, "rollout", std::to_string(i));
    try {
      auto p = predict_with_prompt(predictor, graph, patient, prompt, r.seed);
      r.raw_text = std::move(p.raw_text);
      r.parsed = std::move(p.path);
      r.parse_error = std::move(p.parse_error);
      r.ts = std::move(p.ts);
    } catch (const BackendError& e) {
      r.error = e.what();
      if (r.error.empty()) r.error = "backend failure";
    }
  };

  const auto workers = std::min<std::size_t>(k, static_cast<std::size_t>(std::max(1, predictor.max_concurrency())));
  if (workers <= 1) {
    for (std::size_t i = 0; i < k; ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr fault;
    std::mutex fault_mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < k;) {
          try {
            run_one(i);
          } catch (...) {
            std::lock_guard lock(fault_mu);
            if (!fault) fault = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (fault) std::rethrow_exception(fault);
  }

  if (store) store->append(set);
  if (set.successes() == 0)
    throw BackendError("all " + std::to_string(k) + " rollouts failed for " + set.model_id + "/" +
                       patient.patient_id + ": " + set.rollouts.front().error);
  return set;
}

}  // namespace guidebench
