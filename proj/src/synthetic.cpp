// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidebench/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "guidebench/digest.hpp"
#include "guidebench/simulation.hpp"

namespace guidebench {

std::string to_string(SynthMode m) { return m == SynthMode::structured ? "structured" : "unstructured"; }

SynthMode synth_mode_from_string(const std::string& s) {
  if (s == "structured") return SynthMode::structured;
  if (s == "unstructured") return SynthMode::unstructured;
  throw std::invalid_argument("unknown synthetic mode '" + s + "'");
}

std::string to_string(Verification v) {
  return v == Verification::regenerated ? "regenerated" : "preference_selected";
}

namespace {

std::optional<nlohmann::json> parse_record(const std::string& raw) {
  const auto open = raw.find('{');
  const auto close = raw.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) return std::nullopt;
  auto j = nlohmann::json::parse(raw.substr(open, close - open + 1), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  for (const char* key : kStructuredFields)
    if (!j.contains(key) || !j[key].is_string()) return std::nullopt;
  return j;
}

std::string join_exemplars(std::span<const std::string> exemplars) {
  std::string out;
  for (std::size_t i = 0; i < exemplars.size(); ++i)
    out += "--- Example " + std::to_string(i + 1) + " ---\n" + exemplars[i] + "\n";
  return out;
}

}  // namespace

StructuredResult generate_structured_case(Predictor& generator, const GuidelineGraph& graph,
                                          const GuidelinePath& target, Seed seed, const PromptSet& prompts) {
  if (target.empty() || !resolve_terminal(target, graph).terminal_reached())
    throw std::invalid_argument("generate_structured_case: target must end at a recommendation");
  const auto graph_text = prompts.graph_text(graph);
  StructuredResult out;

  Request fill;
  fill.role = Role::fill_structured;
  fill.seed = derive_seed(seed, "fill", "");
  fill.prompt = prompts.fill_structured.render({{"graph", graph_text}, {"path", target.render()}});
  fill.context.graph = &graph;
  fill.context.target = &target;
  out.raw_fields = generator.complete(fill).text;
  out.fields = parse_record(out.raw_fields);
  if (!out.fields) {
    out.reason = "malformed record";
    return out;
  }

  Request rec;
  rec.role = Role::reconstruct_path;
  rec.seed = derive_seed(seed, "reconstruct", "");
  rec.prompt = prompts.reconstruct_path.render({{"graph", graph_text}, {"fields", out.fields->dump(1)}});
  rec.context.graph = &graph;
  rec.context.fields = &*out.fields;
  out.raw_reconstruction = generator.complete(rec).text;
  out.reconstructed = extract_last_path(out.raw_reconstruction).path;
  if (!out.reconstructed)
    out.reason = "reconstruction produced no path";
  else if (!(*out.reconstructed == target))
    out.reason = "reconstruction mismatch";
  return out;
}

std::string generate_note(Predictor& generator, const GuidelineGraph& graph, const GuidelinePath& target,
                          const nlohmann::json* fields, std::span<const std::string> exemplars, Seed seed,
                          const PromptSet& prompts) {
  if (exemplars.empty()) throw std::invalid_argument("generate_note: exemplars must be nonempty");
  Request req;
  req.role = Role::write_note;
  req.seed = seed;
  req.prompt = prompts.write_note.render({{"graph", prompts.graph_text(graph)},
                                          {"path", target.render()},
                                          {"fields", fields ? fields->dump(1) : std::string()},
                                          {"exemplars", join_exemplars(exemplars)}});
  req.context.graph = &graph;
  req.context.target = &target;
  req.context.fields = fields;
  req.context.exemplars = exemplars;
  auto text = generator.complete(req).text;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos)
    throw BackendError("generator " + generator.model_id() + " returned an empty note");
  return text;
}

std::optional<char> parse_choice(std::string_view raw) {
  const auto pos = raw.rfind("Choice:");
  if (pos == std::string_view::npos) return std::nullopt;
  for (auto i = pos + 7; i < raw.size(); ++i) {
    if (raw[i] == ' ' || raw[i] == '\t') continue;
    if (raw[i] == 'A' || raw[i] == 'B') return raw[i];
    return std::nullopt;
  }
  return std::nullopt;
}

PreferenceOutcome select_label_by_preference(Predictor& evaluator, const std::string& generator_id,
                                             const GuidelineGraph& graph, const std::string& note_text,
                                             const GuidelinePath& target, Seed seed, const PromptSet& prompts) {
  if (evaluator.model_id() == generator_id)
    throw std::invalid_argument("evaluator and generator must be different models (" + generator_id + ")");
  PreferenceOutcome out;
  const PatientCase synthetic{"synthetic", note_text, std::nullopt, std::nullopt};
  auto pred = predict_path(evaluator, graph, synthetic, prompts, derive_seed(seed, "predict", ""));
  out.raw_prediction = pred.raw_text;
  out.predicted = pred.path;
  if (out.predicted && *out.predicted == target) {
    out.accepted = true;
    out.verification = Verification::regenerated;
    return out;
  }
  if (!out.predicted) {
    out.reason = "evaluator produced no path";
    return out;
  }

  Rng slot(derive_seed(seed, "slot", ""));
  out.target_in_slot_a = slot.index(2) == 0;
  out.compared = true;
  const GuidelinePath& a = out.target_in_slot_a ? target : *out.predicted;
  const GuidelinePath& b = out.target_in_slot_a ? *out.predicted : target;
  Request req;
  req.role = Role::choose_preference;
  req.seed = derive_seed(seed, "choose", "");
  req.prompt = prompts.choose_preference.render(
      {{"graph", prompts.graph_text(graph)}, {"note", note_text}, {"option_a", a.render()}, {"option_b", b.render()}});
  req.context.graph = &graph;
  req.context.target = &target;
  req.context.option_a = &a;
  req.context.option_b = &b;
  out.raw_choice = evaluator.complete(req).text;
  const auto choice = parse_choice(out.raw_choice);
  if (!choice) {
    out.reason = "no choice in evaluator output";
    return out;
  }
  if ((*choice == 'A') == out.target_in_slot_a) {
    out.accepted = true;
    out.verification = Verification::preference_selected;
  } else {
    out.reason = "evaluator preferred its own path";
  }
  return out;
}

bool leaks_node_ids(std::string_view text) {
  const auto ex = extract_last_path(text);
  return ex.path.has_value() || ex.error != "no node identifiers in output";
}

nlohmann::json SynthStats::to_json() const {
  return {{"attempts", attempts},
          {"accepted", accepted},
          {"acceptance_rate", acceptance_rate()},
          {"discarded_reconstruction", discarded_reconstruction},
          {"discarded_leak", discarded_leak},
          {"rejected_preference", rejected_preference},
          {"regenerated", regenerated},
          {"preference_selected", preference_selected},
          {"backend_failures", backend_failures},
          {"budget_exhausted", budget_exhausted}};
}

ProxyBenchmark SyntheticBenchmark::to_proxy() const {
  ProxyBenchmark p;
  p.method = mode == SynthMode::structured ? ProxyMethod::synth_structured : ProxyMethod::synth_unstructured;
  for (const auto& c : cases) {
    PseudoLabel label{c.case_id, c.target_path, c.target_path.back(), p.method, 1.0};
    p.entries.push_back({c.case_id, std::move(label), c.note_text});
  }
  return p;
}

SyntheticBenchmark build_synthetic_benchmark(const SynthConfig& config, Predictor& generator, Predictor& evaluator,
                                             const GuidelineGraph& graph, std::span<const std::string> exemplars,
                                             const PromptSet& prompts) {
  if (config.n_cases < 1) throw std::invalid_argument("n_cases must be at least 1");
  if (exemplars.empty()) throw std::invalid_argument("no exemplar notes supplied");
  if (generator.model_id() == evaluator.model_id())
    throw std::invalid_argument("evaluator and generator must be different models");

  SyntheticBenchmark bench;
  bench.mode = config.mode;
  const std::size_t budget = config.budget_factor * config.n_cases;
  const char* prefix = config.mode == SynthMode::structured ? "ss" : "su";

  for (std::size_t attempt = 0; attempt < budget && bench.cases.size() < config.n_cases; ++attempt) {
    ++bench.stats.attempts;
    const auto tag = std::to_string(attempt);
    const auto target = sample_random_path(graph, derive_seed(config.seed, "target", tag));
    const Seed case_seed = derive_seed(config.seed, "case", tag);
    nlohmann::json audit = {{"attempt", attempt}, {"target_path", target.render()}};

    Rng pick(derive_seed(case_seed, "exemplars", ""));
    std::vector<std::size_t> order(exemplars.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[pick.index(i)]);
    std::vector<std::string> chosen;
    for (std::size_t i = 0; i < std::min(config.exemplar_count, order.size()); ++i) chosen.push_back(exemplars[order[i]]);

    try {
      std::optional<nlohmann::json> fields;
      if (config.mode == SynthMode::structured) {
        auto sr = generate_structured_case(generator, graph, target, case_seed, prompts);
        if (!sr.kept()) {
          ++bench.stats.discarded_reconstruction;
          audit["stage"] = "reconstruction";
          audit["reason"] = sr.reason;
          audit["reconstructed_path"] = sr.reconstructed ? nlohmann::json(sr.reconstructed->render()) : nlohmann::json();
          audit["raw_fields"] = sr.raw_fields;
          bench.audit.push_back(std::move(audit));
          continue;
        }
        fields = std::move(sr.fields);
      }
      auto note = generate_note(generator, graph, target, fields ? &*fields : nullptr, chosen,
                                derive_seed(case_seed, "note", ""), prompts);
      if (leaks_node_ids(note)) {
        ++bench.stats.discarded_leak;
        audit["stage"] = "note";
        audit["reason"] = "note mentions node identifiers";
        bench.audit.push_back(std::move(audit));
        continue;
      }
      auto pref = select_label_by_preference(evaluator, generator.model_id(), graph, note, target,
                                             derive_seed(case_seed, "evaluate", ""), prompts);
      if (!pref.accepted) {
        ++bench.stats.rejected_preference;
        audit["stage"] = "preference";
        audit["reason"] = pref.reason;
        audit["predicted_path"] = pref.predicted ? nlohmann::json(pref.predicted->render()) : nlohmann::json();
        audit["target_in_slot_a"] = pref.target_in_slot_a;
        bench.audit.push_back(std::move(audit));
        continue;
      }
      ++(pref.verification == Verification::regenerated ? bench.stats.regenerated : bench.stats.preference_selected);
      char id[32];
      std::snprintf(id, sizeof id, "%s-%04zu", prefix, bench.cases.size() + 1);
      bench.cases.push_back(SyntheticCase{id, target, std::move(fields), std::move(note), config.mode,
                                          pref.verification, generator.model_id(), evaluator.model_id()});
      ++bench.stats.accepted;
    } catch (const BackendError& e) {
      ++bench.stats.backend_failures;
      audit["stage"] = "backend";
      audit["reason"] = e.what();
      bench.audit.push_back(std::move(audit));
    }
  }
  bench.stats.budget_exhausted = bench.cases.size() < config.n_cases;
  return bench;
}

std::vector<std::string> load_exemplars(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<std::string> out;
  for (const auto& f : files) out.push_back(read_file(f));
  return out;
}

void write_synthetic(const std::filesystem::path& path, const SyntheticBenchmark& bench) {
  std::string cases;
  for (const auto& c : bench.cases) {
    nlohmann::json j = {{"case_id", c.case_id},
                        {"note_text", c.note_text},
                        {"target_path", c.target_path.render()},
                        {"provenance", to_string(c.provenance)},
                        {"verification", to_string(c.verification)},
                        {"generator", c.generator_id},
                        {"evaluator", c.evaluator_id}};
    if (c.structured_fields) j["structured_fields"] = *c.structured_fields;
    cases += j.dump() + "\n";
  }
  write_file(path, cases);
  std::string audit;
  for (const auto& a : bench.audit) audit += a.dump() + "\n";
  write_file(path.string() + ".audit.jsonl", audit);
  nlohmann::json stats = bench.stats.to_json();
  stats["mode"] = to_string(bench.mode);
  write_file(path.string() + ".stats.json", stats.dump(2) + "\n");
}

std::vector<SyntheticCase> load_synthetic(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open synthetic benchmark " + path.string());
  std::vector<SyntheticCase> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    SyntheticCase c;
    c.case_id = j.at("case_id").get<std::string>();
    c.note_text = j.at("note_text").get<std::string>();
    c.target_path = parse_path_string(j.at("target_path").get<std::string>());
    c.provenance = synth_mode_from_string(j.at("provenance").get<std::string>());
    c.verification = j.at("verification").get<std::string>() == "regenerated" ? Verification::regenerated
                                                                              : Verification::preference_selected;
    c.generator_id = j.value("generator", "");
    c.evaluator_id = j.value("evaluator", "");
    if (j.contains("structured_fields")) c.structured_fields = j["structured_fields"];
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace guidebench
