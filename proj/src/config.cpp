#include "ragpoison/config.hpp"

#include <fstream>
#include <set>

#include "ragpoison/error.hpp"

namespace ragpoison {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

void ExperimentConfig::validate() const {
  if (trials < 1) throw ValidationError("trials must be >= 1");
  if (num_queries < 1) throw ValidationError("queries.count (M) must be >= 1");
  if (references_per_query < 1) throw ValidationError("queries.references_per_query must be >= 1");
  if (!kb_path.empty() && !fs::exists(kb_path)) throw ValidationError("kb.path does not exist: " + kb_path);
  if (!entries_path.empty()) {
    if (kb_path.empty()) throw ValidationError("attack.entries_path requires kb.path");
    if (!fs::exists(entries_path)) throw ValidationError("attack.entries_path does not exist: " + entries_path);
  }
  if (kb_path.empty() && (synth.num_classes < 1 || synth.num_entries < synth.num_classes))
    throw ValidationError("kb.synth needs num_entries >= num_classes >= 1");
  if (generator.kind != "stub" && generator.kind != "external")
    throw ValidationError("generator.kind must be stub or external");
  if (generator.kind == "external" && generator.endpoint.empty())
    throw ValidationError("generator.endpoint is required for the external generator");
  backend.validate();
  pipeline.validate();
  attack.validate();
  preprocess.validate();
}

namespace {

void check_keys(const ojson& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError("config: '" + where + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ValidationError("config: unknown key '" + (where.empty() ? k : where + "." + k) + "'");
}

template <typename T>
void take(const ojson& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("config: '" + (where.empty() ? std::string(key) : where + "." + key) + "' has the wrong type");
  }
}

}  // namespace

void apply_config_json(ExperimentConfig& cfg, const ojson& j) {
  check_keys(j, "", {"name", "seed", "trials", "kb", "queries", "backend", "generator", "pipeline", "attack",
                     "defense", "vocabulary"});
  take(j, "name", cfg.name, "");
  take(j, "seed", cfg.seed, "");
  take(j, "trials", cfg.trials, "");
  take(j, "vocabulary", cfg.extra_vocabulary, "");
  if (j.contains("kb")) {
    const auto& k = j["kb"];
    check_keys(k, "kb", {"path", "synth"});
    take(k, "path", cfg.kb_path, "kb");
    if (k.contains("synth")) {
      const auto& s = k["synth"];
      check_keys(s, "kb.synth", {"num_entries", "num_classes", "sections_per_entry", "height", "width", "base_level",
                                 "class_contrast", "block_jitter", "pixel_noise", "query_gold_share"});
      take(s, "num_entries", cfg.synth.num_entries, "kb.synth");
      take(s, "num_classes", cfg.synth.num_classes, "kb.synth");
      take(s, "sections_per_entry", cfg.synth.sections_per_entry, "kb.synth");
      take(s, "height", cfg.synth.height, "kb.synth");
      take(s, "width", cfg.synth.width, "kb.synth");
      take(s, "base_level", cfg.synth.base_level, "kb.synth");
      take(s, "class_contrast", cfg.synth.class_contrast, "kb.synth");
      take(s, "block_jitter", cfg.synth.block_jitter, "kb.synth");
      take(s, "pixel_noise", cfg.synth.pixel_noise, "kb.synth");
      take(s, "query_gold_share", cfg.synth.query_gold_share, "kb.synth");
    }
  }
  if (j.contains("queries")) {
    const auto& q = j["queries"];
    check_keys(q, "queries", {"count", "references_per_query"});
    take(q, "count", cfg.num_queries, "queries");
    take(q, "references_per_query", cfg.references_per_query, "queries");
  }
  if (j.contains("backend")) {
    const auto& b = j["backend"];
    check_keys(b, "backend", {"kind", "dim", "fusion_weight", "seed", "endpoint"});
    std::string kind = to_string(cfg.backend.kind);
    take(b, "kind", kind, "backend");
    cfg.backend.kind = parse_backend_kind(kind);
    take(b, "dim", cfg.backend.dim, "backend");
    take(b, "fusion_weight", cfg.backend.fusion_weight, "backend");
    take(b, "seed", cfg.backend.seed, "backend");
    take(b, "endpoint", cfg.backend.endpoint, "backend");
  }
  if (j.contains("generator")) {
    const auto& g = j["generator"];
    check_keys(g, "generator", {"kind", "endpoint", "prompt_style"});
    take(g, "kind", cfg.generator.kind, "generator");
    take(g, "endpoint", cfg.generator.endpoint, "generator");
    std::string style = to_string(cfg.generator.prompt_style);
    take(g, "prompt_style", style, "generator");
    cfg.generator.prompt_style = parse_prompt_style(style);
  }
  if (j.contains("pipeline")) {
    const auto& p = j["pipeline"];
    check_keys(p, "pipeline", {"k1", "k2", "reranker_enabled", "context_consumed"});
    take(p, "k1", cfg.pipeline.k1, "pipeline");
    take(p, "k2", cfg.pipeline.k2, "pipeline");
    take(p, "reranker_enabled", cfg.pipeline.reranker_enabled, "pipeline");
    take(p, "context_consumed", cfg.pipeline.context_consumed, "pipeline");
  }
  if (j.contains("attack")) {
    const auto& a = j["attack"];
    check_keys(a, "attack", {"kind", "N", "epsilon", "alpha", "t", "k_clusters", "L", "V", "lambda", "eta",
                             "sim_steps", "rewrite_candidates", "best_iterate", "entries_path"});
    std::string kind = to_string(cfg.attack_kind);
    take(a, "kind", kind, "attack");
    cfg.attack_kind = parse_attack_kind(kind);
    take(a, "N", cfg.attack.N, "attack");
    take(a, "epsilon", cfg.attack.epsilon, "attack");
    take(a, "alpha", cfg.attack.alpha, "attack");
    take(a, "t", cfg.attack.t, "attack");
    take(a, "k_clusters", cfg.attack.k_clusters, "attack");
    take(a, "L", cfg.attack.L, "attack");
    take(a, "V", cfg.attack.V, "attack");
    take(a, "lambda", cfg.attack.lambda, "attack");
    take(a, "eta", cfg.attack.eta, "attack");
    take(a, "sim_steps", cfg.attack.sim_steps, "attack");
    take(a, "rewrite_candidates", cfg.attack.rewrite_candidates, "attack");
    take(a, "best_iterate", cfg.attack.best_iterate, "attack");
    take(a, "entries_path", cfg.entries_path, "attack");
  }
  if (j.contains("defense")) {
    const auto& d = j["defense"];
    check_keys(d, "defense", {"kinds", "min_scale", "max_scale"});
    if (d.contains("kinds")) {
      std::vector<std::string> kinds;
      take(d, "kinds", kinds, "defense");
      cfg.defenses.clear();
      for (const auto& k : kinds) {
        const auto kind = parse_defense_kind(k);
        if (kind != DefenseKind::none) cfg.defenses.push_back(kind);
      }
    }
    take(d, "min_scale", cfg.preprocess.min_scale, "defense");
    take(d, "max_scale", cfg.preprocess.max_scale, "defense");
  }
}

ExperimentConfig load_config(const fs::path& path, const ExperimentConfig& base) {
  if (!fs::exists(path)) throw ValidationError("config file not found: " + path.string());
  std::ifstream in(path);
  if (!in) throw RuntimeError("cannot open " + path.string());
  ojson j;
  try {
    j = ojson::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError("config " + path.string() + ": " + ex.what());
  }
  ExperimentConfig cfg = base;
  apply_config_json(cfg, j);
  // Relative paths are resolved against the config file's directory.
  auto resolve = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (path.parent_path() / p).lexically_normal().string();
  };
  if (j.contains("kb") && j["kb"].contains("path")) resolve(cfg.kb_path);
  if (j.contains("attack") && j["attack"].contains("entries_path")) resolve(cfg.entries_path);
  cfg.validate();
  return cfg;
}

ojson config_to_json(const ExperimentConfig& cfg) {
  ojson j;
  j["name"] = cfg.name;
  j["seed"] = cfg.seed;
  j["trials"] = cfg.trials;
  ojson kb;
  if (!cfg.kb_path.empty()) {
    kb["path"] = cfg.kb_path;
  } else {
    kb["synth"] = ojson{{"num_entries", cfg.synth.num_entries},
                        {"num_classes", cfg.synth.num_classes},
                        {"sections_per_entry", cfg.synth.sections_per_entry},
                        {"height", cfg.synth.height},
                        {"width", cfg.synth.width},
                        {"base_level", cfg.synth.base_level},
                        {"class_contrast", cfg.synth.class_contrast},
                        {"block_jitter", cfg.synth.block_jitter},
                        {"pixel_noise", cfg.synth.pixel_noise},
                        {"query_gold_share", cfg.synth.query_gold_share}};
  }
  j["kb"] = std::move(kb);
  j["queries"] = ojson{{"count", cfg.num_queries}, {"references_per_query", cfg.references_per_query}};
  ojson b{{"kind", to_string(cfg.backend.kind)}, {"dim", cfg.backend.dim}};
  if (cfg.backend.kind == BackendDescriptor::Kind::toy) {
    b["fusion_weight"] = cfg.backend.fusion_weight;
    b["seed"] = cfg.backend.seed;
  } else {
    b["endpoint"] = cfg.backend.endpoint;
  }
  j["backend"] = std::move(b);
  ojson g{{"kind", cfg.generator.kind}, {"prompt_style", to_string(cfg.generator.prompt_style)}};
  if (!cfg.generator.endpoint.empty()) g["endpoint"] = cfg.generator.endpoint;
  j["generator"] = std::move(g);
  j["pipeline"] = ojson{{"k1", cfg.pipeline.k1},
                        {"k2", cfg.pipeline.k2},
                        {"reranker_enabled", cfg.pipeline.reranker_enabled},
                        {"context_consumed", cfg.pipeline.context_consumed}};
  ojson a{{"kind", to_string(cfg.attack_kind)},
          {"N", cfg.attack.N},
          {"epsilon", cfg.attack.epsilon},
          {"alpha", cfg.attack.alpha},
          {"t", cfg.attack.t},
          {"k_clusters", cfg.attack.k_clusters},
          {"L", cfg.attack.L},
          {"V", cfg.attack.V},
          {"lambda", cfg.attack.lambda},
          {"eta", cfg.attack.eta},
          {"sim_steps", cfg.attack.sim_steps},
          {"rewrite_candidates", cfg.attack.rewrite_candidates},
          {"best_iterate", cfg.attack.best_iterate}};
  if (!cfg.entries_path.empty()) a["entries_path"] = cfg.entries_path;
  j["attack"] = std::move(a);
  ojson kinds = ojson::array();
  for (auto d : cfg.defenses) kinds.push_back(to_string(d));
  j["defense"] = ojson{{"kinds", std::move(kinds)},
                       {"min_scale", cfg.preprocess.min_scale},
                       {"max_scale", cfg.preprocess.max_scale}};
  j["vocabulary"] = cfg.extra_vocabulary;
  return j;
}

}  // namespace ragpoison
