#include "ragpoison/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ragpoison/error.hpp"
#include "ragpoison/index.hpp"
#include "ragpoison/pipeline.hpp"
#include "ragpoison/protocol.hpp"
#include "ragpoison/rng.hpp"
#include "ragpoison/synth.hpp"

namespace ragpoison {

namespace fs = std::filesystem;

namespace {

struct Generators {
  std::shared_ptr<ProtocolClient> client;
  std::unique_ptr<CorpusGenerator> corpus;
  std::unique_ptr<Paraphraser> paraphraser;

  std::unique_ptr<AnswerGenerator> answer(const std::vector<std::string>& vocabulary, PromptStyle style) const {
    if (client) return std::make_unique<ExternalAnswerGenerator>(client, style);
    return std::make_unique<StubAnswerGenerator>(vocabulary);
  }
};

Generators make_generators(const GeneratorConfig& g) {
  Generators out;
  if (g.kind == "external") {
    out.client = ProtocolClient::connect(g.endpoint);
    out.corpus = std::make_unique<ExternalCorpusGenerator>(out.client);
    out.paraphraser = std::make_unique<ExternalParaphraser>(out.client);
  } else {
    out.corpus = std::make_unique<StubCorpusGenerator>();
    out.paraphraser = std::make_unique<StubParaphraser>();
  }
  return out;
}

bool has_defense(const ExperimentConfig& cfg, DefenseKind k) {
  return std::find(cfg.defenses.begin(), cfg.defenses.end(), k) != cfg.defenses.end();
}

std::vector<SectionRef> refs_of(const RetrievalResult& r) {
  std::vector<SectionRef> out;
  for (const auto& s : r.sections) out.push_back({s.section.entry_id, s.section.section_id, s.section.is_malicious});
  return out;
}

/// Same-class images from a loaded KB, seeded subset when there are more.
std::vector<Image> kb_references(const KnowledgeBase& kb, const std::map<std::string, std::string>& classes,
                                 const QueryCase& q, int count, std::uint64_t seed) {
  std::vector<const Image*> pool;
  for (const auto& e : kb.entries()) {
    auto it = classes.find(e.id);
    if (it == classes.end() || it->second != q.class_label) continue;
    for (const auto& img : e.images) pool.push_back(img.get());
  }
  if (pool.empty())
    throw ValidationError("no reference images of class '" + q.class_label + "' (eval.json needs entry_classes)");
  Rng rng(seed);
  for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.below(i)]);
  if (pool.size() > static_cast<std::size_t>(count)) pool.resize(count);
  std::vector<Image> out;
  for (const auto* p : pool) out.push_back(*p);
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::uint64_t trial_seed(const ExperimentConfig& cfg, int trial) {
  return derive_seed(cfg.seed, {"trial", std::to_string(trial)});
}

std::vector<std::string> answer_vocabulary(const std::vector<QueryCase>& queries,
                                           const std::vector<std::string>& extra) {
  std::vector<std::string> vocabulary;
  for (const auto& q : queries) {
    vocabulary.push_back(q.gold_answer);
    vocabulary.push_back(q.target_answer);
  }
  for (const auto& v : extra) vocabulary.push_back(v);
  return vocabulary;
}

CraftOutput craft_queries(const ExperimentConfig& config, const Backend& backend, const CorpusGenerator& corpus,
                          const AnswerGenerator& oracle, const KnowledgeBase& kb,
                          const std::vector<QueryCase>& queries, const std::map<std::string, std::string>& classes,
                          const ClassSampler* sampler, std::uint64_t tseed) {
  CraftOutput all;
  if (config.attack_kind == AttackKind::none) return all;
  AttackConfig acfg = config.attack;
  acfg.seed = derive_seed(tseed, {"attack"});
  const CraftContext ctx{backend, corpus, oracle, kb, classes};
  for (const auto& q : queries) {
    const auto rseed = derive_seed(tseed, {"refs", q.id});
    std::vector<Image> refs;
    if (sampler) {
      const int cls = synth_class_index(q.class_label);
      Rng rng(rseed);
      for (int r = 0; r < config.references_per_query; ++r) refs.push_back(sampler->sample(cls, rng));
    } else {
      refs = kb_references(kb, classes, q, config.references_per_query, rseed);
    }
    try {
      auto out = build_attack(config.attack_kind, ctx, q, refs, acfg);
      for (auto& e : out.entries) all.entries.push_back(std::move(e));
      for (auto& m : out.manifest) all.manifest.push_back(std::move(m));
    } catch (const ValidationError& ex) {
      throw ValidationError("query " + q.id + ": " + ex.what());
    } catch (const RuntimeError& ex) {
      throw RuntimeError("query " + q.id + ": " + ex.what());
    }
  }
  return all;
}

CraftOutput craft_attack_for_kb(const ExperimentConfig& config) {
  config.validate();
  if (config.kb_path.empty()) throw ValidationError("crafting needs a knowledge base directory");
  const auto kb = load_kb(config.kb_path);
  const auto manifest = load_eval_manifest(config.kb_path);
  if (manifest.queries.empty()) throw ValidationError(config.kb_path + " has no queries in eval.json");
  std::vector<QueryCase> queries(
      manifest.queries.begin(),
      manifest.queries.begin() + std::min<std::size_t>(manifest.queries.size(), config.num_queries));
  const auto backend = make_backend(config.backend);
  const Generators gens = make_generators(config.generator);
  const auto oracle =
      gens.answer(answer_vocabulary(manifest.queries, config.extra_vocabulary), config.generator.prompt_style);
  return craft_queries(config, *backend, *gens.corpus, *oracle, kb, queries, manifest.entry_classes, nullptr,
                       trial_seed(config, 0));
}

EvalReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto t_start = std::chrono::steady_clock::now();
  EvalReport report;
  report.config = config;

  const auto backend = make_backend(config.backend);
  const Generators gens = make_generators(config.generator);

  KnowledgeBase loaded_kb;
  EvalManifest loaded_manifest;
  std::vector<KnowledgeEntry> preset_entries;
  std::map<std::string, ManifestRecord> preset_manifest;
  if (!config.kb_path.empty()) {
    loaded_kb = load_kb(config.kb_path);
    loaded_manifest = load_eval_manifest(config.kb_path);
    if (loaded_manifest.queries.empty()) throw ValidationError("kb.path has no queries in eval.json");
    if (!config.entries_path.empty()) {
      fs::path ep = config.entries_path;
      const fs::path dir = fs::is_directory(ep) ? ep : ep.parent_path();
      const fs::path jsonl = fs::is_directory(ep) ? ep / "entries.jsonl" : ep;
      preset_entries = load_entries(jsonl, loaded_kb.meta().image_height, loaded_kb.meta().image_width);
      if (fs::exists(dir / "attack_manifest.json")) {
        std::ifstream in(dir / "attack_manifest.json");
        ojson mj;
        try {
          mj = ojson::parse(in);
        } catch (const nlohmann::json::exception& ex) {
          throw ValidationError("attack_manifest.json: " + std::string(ex.what()));
        }
        for (auto& m : manifest_records_from_json(mj)) preset_manifest[m.entry_id] = m;
        // Label the run with the crafted kind when the manifest agrees on one.
        std::set<std::string> kinds;
        for (const auto& [id, m] : preset_manifest) kinds.insert(m.kind);
        if (kinds.size() == 1) report.config.attack_kind = parse_attack_kind(*kinds.begin());
      }
    }
  }

  int total_texts = 0;
  long total_queries = 0, total_rounds = 0;
  std::vector<double> image_secs, text_secs;

  for (int trial = 0; trial < config.trials; ++trial) {
    const std::uint64_t tseed = trial_seed(config, trial);
    KnowledgeBase kb;
    std::vector<QueryCase> all_queries;
    std::map<std::string, std::string> classes;
    std::optional<ClassSampler> sampler;
    if (config.kb_path.empty()) {
      SynthParams p = config.synth;
      p.seed = tseed;
      auto sr = synth_kb(p);
      kb = std::move(sr.kb);
      all_queries = std::move(sr.queries);
      classes = std::move(sr.entry_classes);
      sampler.emplace(p);
    } else {
      kb = loaded_kb;
      all_queries = loaded_manifest.queries;
      classes = loaded_manifest.entry_classes;
    }
    std::vector<QueryCase> queries(all_queries.begin(),
                                   all_queries.begin() + std::min<std::size_t>(all_queries.size(), config.num_queries));

    const auto answer_gen = gens.answer(answer_vocabulary(all_queries, config.extra_vocabulary),
                                        config.generator.prompt_style);

    std::vector<KnowledgeEntry> malicious;
    std::map<std::string, std::vector<const ManifestRecord*>> by_query;
    const std::size_t manifest_start = report.manifest.size();
    if (!config.entries_path.empty()) {
      malicious = preset_entries;
      for (const auto& e : preset_entries) {
        auto it = preset_manifest.find(e.id);
        if (it != preset_manifest.end()) {
          report.manifest.push_back(it->second);
          report.manifest_trials.push_back(trial);
        }
      }
    } else {
      auto out = craft_queries(config, *backend, *gens.corpus, *answer_gen, kb, queries, classes,
                               sampler ? &*sampler : nullptr, tseed);
      malicious = std::move(out.entries);
      for (auto& m : out.manifest) {
        report.manifest.push_back(std::move(m));
        report.manifest_trials.push_back(trial);
      }
    }
    for (std::size_t i = manifest_start; i < report.manifest.size(); ++i)
      by_query[report.manifest[i].query_id].push_back(&report.manifest[i]);

    report.injected_entries += static_cast<int>(malicious.size());
    KnowledgeBase attacked = inject_entries(kb, std::move(malicious));
    kb = KnowledgeBase();
    if (has_defense(config, DefenseKind::dedup)) {
      DedupStats st;
      attacked = dedup_filter(attacked, &st);
      report.dedup.sections_removed += st.sections_removed;
      report.dedup.entries_removed += st.entries_removed;
      report.dedup.malicious_sections_removed += st.malicious_sections_removed;
    }
    const auto index = EmbeddingIndex::build(*backend, attacked);

    std::vector<EvalRecord> trial_records;
    for (const auto& q : queries) {
      Image image = q.query_image;
      std::string question = q.question;
      if (has_defense(config, DefenseKind::preprocess))
        image = preprocess_random(image, derive_seed(tseed, {"preprocess", q.id}), config.preprocess);
      if (has_defense(config, DefenseKind::paraphrase))
        question = paraphrase_question(*gens.paraphraser, question, derive_seed(tseed, {"paraphrase", q.id}));
      AnswerResult res;
      try {
        res = answer_query(attacked, index, *backend, *answer_gen, config.pipeline, image, question);
      } catch (const RuntimeError& ex) {
        throw RuntimeError("query " + q.id + ": " + ex.what());
      }
      EvalRecord rec;
      rec.trial = trial;
      rec.query_id = q.id;
      rec.question = question;
      rec.answer = res.answer;
      rec.target_answer = q.target_answer;
      rec.gold_answer = q.gold_answer;
      rec.success = answer_success(res.answer, q.target_answer);
      rec.retrieved = refs_of(res.retrieved);
      rec.reranked = refs_of(res.reranked);
      for (const auto* m : by_query[q.id]) {
        if (m->generator_queries > 0 || m->rounds_used > 0) {
          ++rec.malicious_texts;
          rec.queries_to_generator += m->generator_queries;
          rec.rounds_used += m->rounds_used;
        }
        rec.image_craft_seconds += m->image_seconds;
        rec.text_craft_seconds += m->text_seconds;
        image_secs.push_back(m->image_seconds);
        text_secs.push_back(m->text_seconds);
      }
      total_texts += rec.malicious_texts;
      total_queries += rec.queries_to_generator;
      total_rounds += rec.rounds_used;
      trial_records.push_back(std::move(rec));
    }
    report.asr_per_trial.push_back(asr(trial_records));
    report.precision_per_trial.push_back(precision(trial_records, config.pipeline.k2));
    for (auto& r : trial_records) report.records.push_back(std::move(r));
  }

  report.asr = asr(report.records);
  report.precision = precision(report.records, config.pipeline.k2);
  report.malicious_texts = total_texts;
  report.mean_queries_per_text = total_texts ? static_cast<double>(total_queries) / total_texts : 0.0;
  report.mean_rounds_per_text = total_texts ? static_cast<double>(total_rounds) / total_texts : 0.0;
  report.mean_image_craft_seconds = mean_of(image_secs);
  report.mean_text_craft_seconds = mean_of(text_secs);
  report.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

void apply_axis(ExperimentConfig& cfg, const std::string& axis, const std::string& value) {
  auto as_int = [&]() {
    try {
      std::size_t pos = 0;
      const int v = std::stoi(value, &pos);
      if (pos != value.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ValidationError("axis " + axis + ": '" + value + "' is not an integer");
    }
  };
  if (axis == "N") cfg.attack.N = as_int();
  else if (axis == "V") cfg.attack.V = as_int();
  else if (axis == "L") cfg.attack.L = as_int();
  else if (axis == "k1") cfg.pipeline.k1 = as_int();
  else if (axis == "k2") {
    cfg.pipeline.k2 = as_int();
    cfg.pipeline.context_consumed = std::min(cfg.pipeline.context_consumed, cfg.pipeline.k2);
  } else if (axis == "backend") {
    if (value.rfind("toy", 0) == 0) {
      cfg.backend.kind = BackendDescriptor::Kind::toy;
      std::stringstream ss(value);
      std::string part;
      std::vector<std::string> parts;
      while (std::getline(ss, part, ':')) parts.push_back(part);
      try {
        if (parts.size() > 1) cfg.backend.seed = std::stoull(parts[1]);
        if (parts.size() > 2) cfg.backend.dim = std::stoi(parts[2]);
      } catch (const std::exception&) {
        throw ValidationError("axis backend: bad value '" + value + "' (expected toy[:seed[:dim]])");
      }
    } else {
      cfg.backend.kind = BackendDescriptor::Kind::external;
      cfg.backend.endpoint = value;
    }
  } else if (axis == "attack") {
    cfg.attack_kind = parse_attack_kind(value);
  } else if (axis == "defense") {
    cfg.defenses.clear();
    const auto d = parse_defense_kind(value);
    if (d != DefenseKind::none) cfg.defenses.push_back(d);
  } else {
    throw ValidationError("unknown ablation axis '" + axis + "' (expected N, V, L, k1, k2, backend, attack, defense)");
  }
  cfg.validate();
}

std::vector<AblationPoint> run_ablation(const ExperimentConfig& base, const std::string& axis,
                                        const std::vector<std::string>& values) {
  if (values.empty()) throw ValidationError("ablation needs at least one value");
  std::vector<ExperimentConfig> cfgs;
  for (const auto& v : values) {
    ExperimentConfig c = base;
    apply_axis(c, axis, v);
    cfgs.push_back(std::move(c));
  }
  std::vector<AblationPoint> out;
  for (std::size_t i = 0; i < values.size(); ++i) out.push_back({values[i], run_experiment(cfgs[i])});
  return out;
}

std::string method_label(const ExperimentConfig& cfg) {
  std::string s;
  switch (cfg.attack_kind) {
    case AttackKind::none: s = "No Attack"; break;
    case AttackKind::spa_vlm: s = "Spa-VLM"; break;
    case AttackKind::naive: s = "Naive Attack"; break;
    case AttackKind::prompt_injection: s = "Prompt Injection Attack"; break;
    case AttackKind::corpus_poisoning: s = "Corpus Poisoning Attack"; break;
    case AttackKind::poisoned_rag: s = "PoisonedRAG"; break;
  }
  if (!cfg.pipeline.reranker_enabled) s += " (w/o reranker)";
  for (auto d : cfg.defenses) s += std::string(" + ") + to_string(d);
  return s;
}

ojson record_to_json(const EvalRecord& r) {
  auto secs = [](const std::vector<SectionRef>& v) {
    ojson a = ojson::array();
    for (const auto& s : v)
      a.push_back(ojson{{"entry_id", s.entry_id}, {"section_id", s.section_id}, {"malicious", s.malicious}});
    return a;
  };
  return ojson{{"trial", r.trial},
               {"query_id", r.query_id},
               {"question", r.question},
               {"answer", r.answer},
               {"target_answer", r.target_answer},
               {"gold_answer", r.gold_answer},
               {"success", r.success},
               {"precision", r.precision()},
               {"retrieved", secs(r.retrieved)},
               {"reranked", secs(r.reranked)},
               {"malicious_texts", r.malicious_texts},
               {"queries_to_generator", r.queries_to_generator},
               {"rounds_used", r.rounds_used},
               {"image_craft_seconds", r.image_craft_seconds},
               {"text_craft_seconds", r.text_craft_seconds}};
}

ojson report_to_json(const EvalReport& report) {
  ojson j;
  j["tool"] = "ragpoison";
  j["version"] = kToolVersion;
  j["method"] = method_label(report.config);
  j["config"] = config_to_json(report.config);
  j["summary"] = ojson{{"asr", report.asr},
                       {"precision", report.precision},
                       {"asr_per_trial", report.asr_per_trial},
                       {"precision_per_trial", report.precision_per_trial},
                       {"num_records", report.records.size()},
                       {"injected_entries", report.injected_entries},
                       {"malicious_texts", report.malicious_texts},
                       {"mean_queries_per_text", report.mean_queries_per_text},
                       {"mean_rounds_per_text", report.mean_rounds_per_text},
                       {"dedup_sections_removed", report.dedup.sections_removed},
                       {"dedup_entries_removed", report.dedup.entries_removed},
                       {"dedup_malicious_sections_removed", report.dedup.malicious_sections_removed},
                       {"mean_image_craft_seconds", report.mean_image_craft_seconds},
                       {"mean_text_craft_seconds", report.mean_text_craft_seconds},
                       {"total_seconds", report.total_seconds}};
  ojson recs = ojson::array();
  for (const auto& r : report.records) recs.push_back(record_to_json(r));
  j["records"] = std::move(recs);
  return j;
}

ojson manifest_records_to_json(const std::vector<ManifestRecord>& records) {
  ojson arr = ojson::array();
  for (const auto& m : records)
    arr.push_back(ojson{{"entry_id", m.entry_id},
                        {"query_id", m.query_id},
                        {"kind", m.kind},
                        {"j", m.j},
                        {"base_id", m.base_id},
                        {"center_index", m.center_index},
                        {"initial_cos", m.initial_cos},
                        {"final_cos", m.final_cos},
                        {"text_cos", m.text_cos},
                        {"rounds_used", m.rounds_used},
                        {"generator_queries", m.generator_queries},
                        {"image_seconds", m.image_seconds},
                        {"text_seconds", m.text_seconds}});
  return ojson{{"entries", std::move(arr)}};
}

std::vector<ManifestRecord> manifest_records_from_json(const ojson& j) {
  std::vector<ManifestRecord> out;
  try {
    for (const auto& e : j.at("entries")) {
      ManifestRecord m;
      m.entry_id = e.at("entry_id").get<std::string>();
      m.query_id = e.value("query_id", "");
      m.kind = e.value("kind", "");
      m.j = e.value("j", 0);
      m.base_id = e.value("base_id", "");
      m.center_index = e.value("center_index", -1);
      m.initial_cos = e.value("initial_cos", 0.0);
      m.final_cos = e.value("final_cos", 0.0);
      m.text_cos = e.value("text_cos", 0.0);
      m.rounds_used = e.value("rounds_used", 0);
      m.generator_queries = e.value("generator_queries", 0);
      m.image_seconds = e.value("image_seconds", 0.0);
      m.text_seconds = e.value("text_seconds", 0.0);
      out.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("malformed attack manifest: ") + ex.what());
  }
  return out;
}

ojson manifest_to_json(const EvalReport& report) {
  ojson j = manifest_records_to_json(report.manifest);
  for (std::size_t i = 0; i < j["entries"].size() && i < report.manifest_trials.size(); ++i)
    j["entries"][i]["trial"] = report.manifest_trials[i];
  return j;
}

ojson strip_timings(const ojson& j) {
  if (j.is_object()) {
    ojson out = ojson::object();
    for (const auto& [k, v] : j.items()) {
      if (k.size() >= 8 && k.compare(k.size() - 8, 8, "_seconds") == 0) continue;
      out[k] = strip_timings(v);
    }
    return out;
  }
  if (j.is_array()) {
    ojson out = ojson::array();
    for (const auto& v : j) out.push_back(strip_timings(v));
    return out;
  }
  return j;
}

EvalReport report_summary_from_json(const ojson& j) {
  EvalReport r;
  try {
    apply_config_json(r.config, j.at("config"));
    const auto& s = j.at("summary");
    r.asr = s.at("asr").get<double>();
    r.precision = s.at("precision").get<double>();
    r.asr_per_trial = s.at("asr_per_trial").get<std::vector<double>>();
    r.precision_per_trial = s.at("precision_per_trial").get<std::vector<double>>();
    r.injected_entries = s.at("injected_entries").get<int>();
    r.malicious_texts = s.at("malicious_texts").get<int>();
    r.mean_queries_per_text = s.at("mean_queries_per_text").get<double>();
    r.mean_rounds_per_text = s.at("mean_rounds_per_text").get<double>();
    r.dedup.sections_removed = s.at("dedup_sections_removed").get<std::size_t>();
    r.dedup.entries_removed = s.at("dedup_entries_removed").get<std::size_t>();
    r.dedup.malicious_sections_removed = s.at("dedup_malicious_sections_removed").get<std::size_t>();
    r.mean_image_craft_seconds = s.at("mean_image_craft_seconds").get<double>();
    r.mean_text_craft_seconds = s.at("mean_text_craft_seconds").get<double>();
    r.total_seconds = s.at("total_seconds").get<double>();
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("malformed report: ") + ex.what());
  }
  return r;
}

ReportFormat parse_report_format(const std::string& s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  throw ValidationError("unknown report format '" + s + "' (expected json, csv, markdown)");
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fmt(double v, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out.flush()) throw RuntimeError("write failed: " + path.string());
}

}  // namespace

std::string render_csv(const EvalReport& report) {
  std::string out =
      "trial,query_id,success,answer,target_answer,gold_answer,retrieved_sections,retrieved_malicious,"
      "reranked_sections,reranked_malicious,precision,malicious_texts,queries_to_generator,rounds_used,"
      "image_craft_seconds,text_craft_seconds\n";
  int tp = 0, returned = 0, texts = 0, queries = 0, rounds = 0;
  for (const auto& r : report.records) {
    const int rmal = static_cast<int>(
        std::count_if(r.retrieved.begin(), r.retrieved.end(), [](const SectionRef& s) { return s.malicious; }));
    out += std::to_string(r.trial) + "," + csv_field(r.query_id) + "," + (r.success ? "1" : "0") + "," +
           csv_field(r.answer) + "," + csv_field(r.target_answer) + "," + csv_field(r.gold_answer) + "," +
           std::to_string(r.retrieved.size()) + "," + std::to_string(rmal) + "," + std::to_string(r.reranked.size()) +
           "," + std::to_string(r.reranked_malicious()) + "," + fmt(r.precision()) + "," +
           std::to_string(r.malicious_texts) + "," + std::to_string(r.queries_to_generator) + "," +
           std::to_string(r.rounds_used) + "," + fmt(r.image_craft_seconds) + "," + fmt(r.text_craft_seconds) + "\n";
    tp += r.reranked_malicious();
    returned += static_cast<int>(r.reranked.size());
    texts += r.malicious_texts;
    queries += r.queries_to_generator;
    rounds += r.rounds_used;
  }
  out += "summary,all," + fmt(report.asr) + ",,,,,," + std::to_string(returned) + "," + std::to_string(tp) + "," +
         fmt(report.precision) + "," + std::to_string(texts) + "," + std::to_string(queries) + "," +
         std::to_string(rounds) + "," + fmt(report.mean_image_craft_seconds) + "," +
         fmt(report.mean_text_craft_seconds) + "\n";
  return out;
}

std::string render_markdown(const std::vector<const EvalReport*>& reports) {
  std::string out = "| Setting | Attack Method | ASR | Precision |\n|---|---|---|---|\n";
  for (const auto* r : reports) {
    const std::string setting =
        r->config.kb_path.empty()
            ? "synthetic " + std::to_string(r->config.synth.num_entries) + " entries"
            : fs::path(r->config.kb_path).filename().string();
    out += "| " + setting + " | " + method_label(r->config) + " | " + fmt(r->asr, 2) + " | " + fmt(r->precision, 2) +
           " |\n";
  }
  return out;
}

void emit_report(const EvalReport& report, ReportFormat format, const fs::path& path) {
  switch (format) {
    case ReportFormat::json: write_file(path, report_to_json(report).dump(2) + "\n"); break;
    case ReportFormat::csv: write_file(path, render_csv(report)); break;
    case ReportFormat::markdown: write_file(path, render_markdown({&report})); break;
  }
}

void write_experiment_outputs(const EvalReport& report, const fs::path& dir) {
  emit_report(report, ReportFormat::json, dir / "report.json");
  emit_report(report, ReportFormat::csv, dir / "records.csv");
  emit_report(report, ReportFormat::markdown, dir / "report.md");
  write_file(dir / "attack_manifest.json", manifest_to_json(report).dump(2) + "\n");
}

std::string render_ablation_csv(const std::string& axis, const std::vector<AblationPoint>& points) {
  std::string out = "axis,value,asr,precision,mean_queries_per_text,injected_entries,num_records\n";
  for (const auto& p : points)
    out += csv_field(axis) + "," + csv_field(p.value) + "," + fmt(p.report.asr) + "," + fmt(p.report.precision) + "," +
           fmt(p.report.mean_queries_per_text) + "," + std::to_string(p.report.injected_entries) + "," +
           std::to_string(p.report.records.size()) + "\n";
  return out;
}

ojson ablation_to_json(const std::string& axis, const std::vector<AblationPoint>& points) {
  ojson arr = ojson::array();
  for (const auto& p : points) {
    ojson full = report_to_json(p.report);
    arr.push_back(ojson{{"value", p.value},
                        {"method", full["method"]},
                        {"summary", full["summary"]},
                        {"config", full["config"]}});
  }
  return ojson{{"tool", "ragpoison"}, {"version", kToolVersion}, {"axis", axis}, {"points", std::move(arr)}};
}

void write_ablation_outputs(const std::string& axis, const std::vector<AblationPoint>& points, const fs::path& dir) {
  write_file(dir / "ablation.csv", render_ablation_csv(axis, points));
  write_file(dir / "ablation.json", ablation_to_json(axis, points).dump(2) + "\n");
  std::vector<const EvalReport*> reps;
  for (const auto& p : points) reps.push_back(&p.report);
  write_file(dir / "ablation.md", render_markdown(reps));
}

}  // namespace ragpoison
