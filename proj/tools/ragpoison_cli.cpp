#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "ragpoison/error.hpp"
#include "ragpoison/experiment.hpp"
#include "ragpoison/index.hpp"
#include "ragpoison/pipeline.hpp"
#include "ragpoison/probe.hpp"
#include "ragpoison/protocol.hpp"
#include "ragpoison/synth.hpp"

namespace fs = std::filesystem;
using namespace ragpoison;

namespace {

// Experiment flags. Unset flags leave the defaults alone; a --config file
// is applied on top of the flags.
struct ExperimentFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string kb;
  std::optional<int> trials, queries, references;
  std::string kind;
  std::optional<int> N, t, clusters, L, V, sim_steps;
  std::optional<double> epsilon, alpha, lambda, eta;
  std::optional<int> k1, k2, context_consumed;
  bool no_reranker = false;
  std::string backend, endpoint;
  std::optional<int> dim;
  std::optional<double> fusion_weight;
  std::optional<std::uint64_t> backend_seed;
  std::string generator, generator_endpoint, prompt_style;
  std::vector<std::string> defenses;
  std::string entries;
};

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("RAGPOISON_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos != std::string(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(std::string("RAGPOISON_SEED is not an unsigned integer: ") + s);
  }
}

void add_seed(CLI::App* app, std::optional<std::uint64_t>& seed) {
  app->add_option("--seed", seed, "Master seed (default: $RAGPOISON_SEED, else 1)");
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback = 1) {
  if (flag) return *flag;
  if (auto e = env_seed()) return *e;
  return fallback;
}

void add_experiment_flags(CLI::App* app, ExperimentFlags& f, bool with_kind) {
  app->add_option("--config", f.config, "Experiment config (JSON); its keys override flags")->check(CLI::ExistingFile);
  add_seed(app, f.seed);
  app->add_option("--kb", f.kb, "Knowledge base directory (default: synthetic)");
  app->add_option("--trials", f.trials, "Number of trials");
  app->add_option("--queries", f.queries, "Target questions per trial (M)");
  app->add_option("--references", f.references, "Reference images per target question");
  if (with_kind)
    app->add_option("--kind", f.kind, "spa-vlm|naive|prompt-injection|corpus-poisoning|poisoned-rag|none");
  app->add_option("--N", f.N, "Malicious entries per target question");
  app->add_option("--epsilon", f.epsilon, "L-inf perturbation budget");
  app->add_option("--alpha", f.alpha, "PGD step size");
  app->add_option("--steps", f.t, "PGD iterations");
  app->add_option("--clusters", f.clusters, "k-means clusters");
  app->add_option("--L", f.L, "Maximum text optimization rounds");
  app->add_option("--V", f.V, "Corpus word limit");
  app->add_option("--lambda", f.lambda, "Text drift penalty");
  app->add_option("--eta", f.eta, "Text step size");
  app->add_option("--sim-steps", f.sim_steps, "Continuous similarity steps");
  app->add_option("--k1", f.k1, "Entries kept by the visual retriever");
  app->add_option("--k2", f.k2, "Sections kept by the reranker");
  app->add_option("--context-consumed", f.context_consumed, "Top sections given to the generator");
  app->add_flag("--no-reranker", f.no_reranker, "Disable the reranker");
  app->add_option("--backend", f.backend, "toy|external");
  app->add_option("--endpoint", f.endpoint, "External backend endpoint (tcp://host:port or stdio:<cmd>)");
  app->add_option("--dim", f.dim, "Embedding size (toy)");
  app->add_option("--fusion-weight", f.fusion_weight, "Image weight of the fused embedding (toy)");
  app->add_option("--backend-seed", f.backend_seed, "Projection seed (toy)");
  app->add_option("--generator", f.generator, "stub|external");
  app->add_option("--generator-endpoint", f.generator_endpoint, "External generator endpoint");
  app->add_option("--prompt-style", f.prompt_style, "evqa|infoseek");
  app->add_option("--defense", f.defenses, "preprocess|paraphrase|dedup (repeatable)");
  app->add_option("--entries", f.entries, "Pre-crafted entries.jsonl or directory (requires --kb)");
}

ExperimentConfig resolve_experiment(const ExperimentFlags& f) {
  ExperimentConfig c;
  c.seed = resolve_seed(f.seed, c.seed);
  if (!f.kb.empty()) c.kb_path = f.kb;
  if (f.trials) c.trials = *f.trials;
  if (f.queries) c.num_queries = *f.queries;
  if (f.references) c.references_per_query = *f.references;
  if (!f.kind.empty()) c.attack_kind = parse_attack_kind(f.kind);
  if (f.N) c.attack.N = *f.N;
  if (f.epsilon) c.attack.epsilon = *f.epsilon;
  if (f.alpha) c.attack.alpha = *f.alpha;
  if (f.t) c.attack.t = *f.t;
  if (f.clusters) c.attack.k_clusters = *f.clusters;
  if (f.L) c.attack.L = *f.L;
  if (f.V) c.attack.V = *f.V;
  if (f.lambda) c.attack.lambda = *f.lambda;
  if (f.eta) c.attack.eta = *f.eta;
  if (f.sim_steps) c.attack.sim_steps = *f.sim_steps;
  if (f.k1) c.pipeline.k1 = *f.k1;
  if (f.k2) c.pipeline.k2 = *f.k2;
  if (f.context_consumed) c.pipeline.context_consumed = *f.context_consumed;
  if (f.no_reranker) c.pipeline.reranker_enabled = false;
  if (!f.backend.empty()) c.backend.kind = parse_backend_kind(f.backend);
  if (!f.endpoint.empty()) c.backend.endpoint = f.endpoint;
  if (f.dim) c.backend.dim = *f.dim;
  if (f.fusion_weight) c.backend.fusion_weight = *f.fusion_weight;
  if (f.backend_seed) c.backend.seed = *f.backend_seed;
  if (!f.generator.empty()) c.generator.kind = f.generator;
  if (!f.generator_endpoint.empty()) c.generator.endpoint = f.generator_endpoint;
  if (!f.prompt_style.empty()) c.generator.prompt_style = parse_prompt_style(f.prompt_style);
  for (const auto& d : f.defenses) {
    const auto k = parse_defense_kind(d);
    if (k != DefenseKind::none) c.defenses.push_back(k);
  }
  if (!f.entries.empty()) c.entries_path = f.entries;
  if (!f.config.empty()) c = load_config(f.config, c);
  c.validate();
  return c;
}

void write_json(const fs::path& path, const ojson& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

ojson kb_summary(const KnowledgeBase& kb, const EvalManifest& m) {
  return ojson{{"name", kb.meta().name},
               {"entries", kb.size()},
               {"sections", kb.num_sections()},
               {"images", kb.num_images()},
               {"image_height", kb.meta().image_height},
               {"image_width", kb.meta().image_width},
               {"malicious_entries", kb.malicious_ids().size()},
               {"queries", m.queries.size()},
               {"labelled_entries", m.entry_classes.size()},
               {"content_hash", kb.content_hash()}};
}

void print_summary(const EvalReport& r, const fs::path& out) {
  std::printf("%s: ASR %.4f, Precision %.4f over %zu records; %.2f generator queries per text\n",
              method_label(r.config).c_str(), r.asr, r.precision, r.records.size(), r.mean_queries_per_text);
  std::printf("wrote %s\n", out.string().c_str());
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ','))
    if (!part.empty()) out.push_back(part);
  return out;
}

EvalManifest surviving_manifest(const EvalManifest& m, const KnowledgeBase& kb) {
  EvalManifest out;
  out.queries = m.queries;
  for (const auto& [id, cls] : m.entry_classes)
    if (kb.find(id)) out.entry_classes[id] = cls;
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Poisoning red-team harness for retrieval-augmented visual question answering", "ragpoison"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  // kb
  auto* kb_cmd = app.add_subcommand("kb", "Build, check and modify knowledge bases");
  kb_cmd->require_subcommand(1);

  auto* kb_synth = kb_cmd->add_subcommand("synth", "Generate a synthetic knowledge base with target questions");
  SynthParams sp;
  std::optional<std::uint64_t> synth_seed;
  std::string synth_out;
  kb_synth->add_option("--out", synth_out, "Output directory")->required();
  kb_synth->add_option("--entries", sp.num_entries, "Number of entries")->capture_default_str();
  kb_synth->add_option("--classes", sp.num_classes, "Number of image classes")->capture_default_str();
  kb_synth->add_option("--sections", sp.sections_per_entry, "Text sections per entry")->capture_default_str();
  kb_synth->add_option("--height", sp.height, "Image height")->capture_default_str();
  kb_synth->add_option("--width", sp.width, "Image width")->capture_default_str();
  add_seed(kb_synth, synth_seed);

  auto* kb_validate = kb_cmd->add_subcommand("validate", "Load a knowledge base and check every record");
  std::string validate_dir;
  std::optional<std::uint64_t> unused_seed;
  kb_validate->add_option("--kb", validate_dir, "Knowledge base directory")->required();
  add_seed(kb_validate, unused_seed);

  auto* kb_inspect = kb_cmd->add_subcommand("inspect", "Print knowledge base statistics or one entry");
  std::string inspect_dir, inspect_entry;
  kb_inspect->add_option("--kb", inspect_dir, "Knowledge base directory")->required();
  kb_inspect->add_option("--entry", inspect_entry, "Entry id to print");
  add_seed(kb_inspect, unused_seed);

  auto* kb_inject = kb_cmd->add_subcommand("inject", "Write D plus crafted entries as a new knowledge base");
  std::string inject_kb, inject_entries_path, inject_out;
  kb_inject->add_option("--kb", inject_kb, "Clean knowledge base directory")->required();
  kb_inject->add_option("--entries", inject_entries_path, "Crafted entries.jsonl or its directory")->required();
  kb_inject->add_option("--out", inject_out, "Output directory")->required();
  add_seed(kb_inject, unused_seed);

  // index
  auto* index_cmd = app.add_subcommand("index", "Embedding cache");
  index_cmd->require_subcommand(1);
  auto* index_build = index_cmd->add_subcommand("build", "Build (or reuse) the image-embedding cache of a KB");
  std::string index_kb, index_out;
  BackendDescriptor index_backend;
  std::string index_backend_kind = "toy";
  index_build->add_option("--kb", index_kb, "Knowledge base directory")->required();
  index_build->add_option("--out", index_out, "Cache file (default: <kb>/index.bin)");
  index_build->add_option("--backend", index_backend_kind, "toy|external")->capture_default_str();
  index_build->add_option("--endpoint", index_backend.endpoint, "External backend endpoint");
  index_build->add_option("--dim", index_backend.dim, "Embedding size")->capture_default_str();
  index_build->add_option("--fusion-weight", index_backend.fusion_weight, "Fused image weight")->capture_default_str();
  index_build->add_option("--backend-seed", index_backend.seed, "Projection seed")->capture_default_str();
  add_seed(index_build, unused_seed);

  // attack
  auto* attack_cmd = app.add_subcommand("attack", "Craft malicious entries");
  attack_cmd->require_subcommand(1);
  auto* attack_craft = attack_cmd->add_subcommand("craft", "Craft entries for the target questions of a KB");
  ExperimentFlags craft_flags;
  std::string craft_out;
  add_experiment_flags(attack_craft, craft_flags, true);
  attack_craft->add_option("--out", craft_out, "Output directory (entries.jsonl, images/, attack_manifest.json)")
      ->required();

  // query
  auto* query_cmd = app.add_subcommand("query", "Ask the pipeline");
  query_cmd->require_subcommand(1);
  auto* query_run = query_cmd->add_subcommand("run", "Answer one image question end to end");
  ExperimentFlags qflags;
  std::string q_image, q_question, q_id, q_index;
  std::vector<std::string> q_vocab;
  bool q_json = false;
  add_experiment_flags(query_run, qflags, false);
  query_run->add_option("--image", q_image, "Query image (.png or .pfm)");
  query_run->add_option("--question", q_question, "Question text");
  query_run->add_option("--query", q_id, "Use a target question from the KB's eval.json");
  query_run->add_option("--index", q_index, "Embedding cache (default: <kb>/index.bin)");
  query_run->add_option("--vocab", q_vocab, "Extra answer candidates for the stub generator");
  query_run->add_flag("--json", q_json, "Print the full result as JSON");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Experiments");
  eval_cmd->require_subcommand(1);
  auto* eval_run = eval_cmd->add_subcommand("run", "Run one experiment and write reports");
  ExperimentFlags eval_flags;
  std::string eval_out = "out", eval_format;
  add_experiment_flags(eval_run, eval_flags, true);
  eval_run->add_option("--out", eval_out, "Output directory")->capture_default_str();
  eval_run->add_option("--format", eval_format, "Also print the report to stdout: json|csv|markdown");

  auto* eval_ablate = eval_cmd->add_subcommand("ablate", "Sweep one parameter");
  ExperimentFlags ablate_flags;
  std::string ablate_axis, ablate_values, ablate_out = "out";
  add_experiment_flags(eval_ablate, ablate_flags, true);
  eval_ablate->add_option("--axis", ablate_axis, "N|V|L|k1|k2|backend|attack|defense")->required();
  eval_ablate->add_option("--values", ablate_values, "Comma-separated values")->required();
  eval_ablate->add_option("--out", ablate_out, "Output directory")->capture_default_str();

  // defend
  auto* defend_cmd = app.add_subcommand("defend", "Defenses");
  defend_cmd->require_subcommand(1);
  auto* defend_apply = defend_cmd->add_subcommand("apply", "Apply one defense to an image, a question or a KB");
  std::string d_kind, d_image, d_question, d_kb, d_out;
  std::optional<double> d_scale;
  int d_oy = 0, d_ox = 0;
  PreprocessParams d_params;
  std::optional<std::uint64_t> d_seed;
  defend_apply->add_option("--kind", d_kind, "preprocess|paraphrase|dedup")->required();
  defend_apply->add_option("--image", d_image, "Input image (preprocess)");
  defend_apply->add_option("--question", d_question, "Question (paraphrase)");
  defend_apply->add_option("--kb", d_kb, "Knowledge base directory (dedup)");
  defend_apply->add_option("--out", d_out, "Output image or KB directory");
  defend_apply->add_option("--scale", d_scale, "Fixed resize factor (preprocess; default: random)");
  defend_apply->add_option("--offset-y", d_oy, "Fixed vertical offset")->capture_default_str();
  defend_apply->add_option("--offset-x", d_ox, "Fixed horizontal offset")->capture_default_str();
  defend_apply->add_option("--min-scale", d_params.min_scale, "Random resize lower bound")->capture_default_str();
  defend_apply->add_option("--max-scale", d_params.max_scale, "Random resize upper bound")->capture_default_str();
  add_seed(defend_apply, d_seed);

  // backend
  auto* backend_cmd = app.add_subcommand("backend", "External backends");
  backend_cmd->require_subcommand(1);
  auto* backend_probe = backend_cmd->add_subcommand("probe", "Replay a handshake against an external backend");
  std::string p_endpoint, p_transcript, p_record;
  int p_dim = 128;
  backend_probe->add_option("--endpoint", p_endpoint, "tcp://host:port or stdio:<cmd>")->required();
  backend_probe->add_option("--transcript", p_transcript, "Request lines to replay (default: built-in handshake)")
      ->check(CLI::ExistingFile);
  backend_probe->add_option("--dim", p_dim, "Embedding size for the built-in image_grad target")
      ->capture_default_str();
  backend_probe->add_option("--record", p_record, "Write request/response pairs as JSON lines");
  add_seed(backend_probe, unused_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* sub = &app;
    while (!sub->get_subcommands().empty()) sub = sub->get_subcommands().front();
    std::cerr << sub->help();
    return 1;
  }

  try {
    if (*kb_synth) {
      sp.seed = resolve_seed(synth_seed);
      const auto r = synth_kb(sp);
      save_kb(r.kb, synth_out, r.manifest());
      std::printf("wrote %zu entries, %zu queries to %s\n", r.kb.size(), r.queries.size(), synth_out.c_str());
    } else if (*kb_validate) {
      const auto kb = load_kb(validate_dir);
      const auto m = load_eval_manifest(validate_dir);
      for (const auto& q : m.queries) validate_query(q);
      std::printf("ok: %zu entries, %zu sections, %zu images, %zu queries\n", kb.size(), kb.num_sections(),
                  kb.num_images(), m.queries.size());
    } else if (*kb_inspect) {
      const auto kb = load_kb(inspect_dir);
      if (inspect_entry.empty()) {
        std::cout << kb_summary(kb, load_eval_manifest(inspect_dir)).dump(2) << "\n";
      } else {
        const auto* e = kb.find(inspect_entry);
        if (!e) throw ValidationError("no entry '" + inspect_entry + "'");
        ojson secs = ojson::array();
        for (const auto& s : e->sections) secs.push_back(ojson{{"section_id", s.section_id}, {"text", s.text}});
        std::cout << ojson{{"id", e->id},
                           {"title", e->title},
                           {"images", e->images.size()},
                           {"malicious", e->is_malicious},
                           {"sections", secs}}
                         .dump(2)
                  << "\n";
      }
    } else if (*kb_inject) {
      const auto kb = load_kb(inject_kb);
      const auto m = load_eval_manifest(inject_kb);
      const fs::path ep = inject_entries_path;
      const auto entries = load_entries(fs::is_directory(ep) ? ep / "entries.jsonl" : ep, kb.meta().image_height,
                                        kb.meta().image_width);
      const auto merged = inject_entries(kb, entries);
      save_kb(merged, inject_out, surviving_manifest(m, merged));
      std::printf("wrote %zu entries (%zu injected) to %s\n", merged.size(), entries.size(), inject_out.c_str());
    } else if (*index_build) {
      index_backend.kind = parse_backend_kind(index_backend_kind);
      const auto backend = make_backend(index_backend);
      const auto kb = load_kb(index_kb);
      const fs::path path = index_out.empty() ? fs::path(index_kb) / "index.bin" : fs::path(index_out);
      bool rebuilt = false;
      const auto index = EmbeddingIndex::load_or_build(*backend, kb, path, &rebuilt);
      std::printf("%s %s: %zu vectors of dim %d\n", rebuilt ? "built" : "reused", path.string().c_str(),
                  index.count(), index.dim());
    } else if (*attack_craft) {
      if (craft_flags.kb.empty() && craft_flags.config.empty()) throw ValidationError("attack craft needs --kb");
      const auto cfg = resolve_experiment(craft_flags);
      const auto out = craft_attack_for_kb(cfg);
      save_entries(out.entries, craft_out);
      write_json(fs::path(craft_out) / "attack_manifest.json", manifest_records_to_json(out.manifest));
      std::printf("crafted %zu %s entries into %s\n", out.entries.size(), to_string(cfg.attack_kind),
                  craft_out.c_str());
    } else if (*query_run) {
      if (qflags.kb.empty() && qflags.config.empty()) throw ValidationError("query run needs --kb");
      const auto cfg = resolve_experiment(qflags);
      if (cfg.kb_path.empty()) throw ValidationError("query run needs --kb");
      const auto kb = load_kb(cfg.kb_path);
      const auto m = load_eval_manifest(cfg.kb_path);
      Image image;
      std::string question = q_question;
      if (!q_id.empty()) {
        auto it = std::find_if(m.queries.begin(), m.queries.end(), [&](const QueryCase& q) { return q.id == q_id; });
        if (it == m.queries.end()) throw ValidationError("no query '" + q_id + "' in eval.json");
        image = it->query_image;
        if (question.empty()) question = it->question;
      }
      if (!q_image.empty()) image = read_image(q_image);
      if (image.pixels().empty()) throw ValidationError("query run needs --image or --query");
      if (question.empty()) throw ValidationError("query run needs --question or --query");
      auto extra = cfg.extra_vocabulary;
      extra.insert(extra.end(), q_vocab.begin(), q_vocab.end());
      const auto backend = make_backend(cfg.backend);
      std::unique_ptr<AnswerGenerator> gen;
      if (cfg.generator.kind == "external")
        gen = std::make_unique<ExternalAnswerGenerator>(ProtocolClient::connect(cfg.generator.endpoint),
                                                        cfg.generator.prompt_style);
      else
        gen = std::make_unique<StubAnswerGenerator>(answer_vocabulary(m.queries, extra));
      const fs::path ipath = q_index.empty() ? fs::path(cfg.kb_path) / "index.bin" : fs::path(q_index);
      const auto index = EmbeddingIndex::load_or_build(*backend, kb, ipath);
      const auto res = answer_query(kb, index, *backend, *gen, cfg.pipeline, image, question);
      if (q_json) {
        auto secs = [](const RetrievalResult& r) {
          ojson a = ojson::array();
          for (const auto& s : r.sections)
            a.push_back(ojson{{"entry_id", s.section.entry_id},
                              {"section_id", s.section.section_id},
                              {"score", s.score},
                              {"malicious", s.section.is_malicious}});
          return a;
        };
        std::cout << ojson{{"question", question},
                           {"answer", res.answer},
                           {"retrieved", secs(res.retrieved)},
                           {"reranked", secs(res.reranked)}}
                         .dump(2)
                  << "\n";
      } else {
        std::printf("answer: %s\n", res.answer.c_str());
        for (const auto& s : res.reranked.sections)
          std::printf("  %.6f %s/%s%s\n", s.score, s.section.entry_id.c_str(), s.section.section_id.c_str(),
                      s.section.is_malicious ? " (malicious)" : "");
      }
    } else if (*eval_run) {
      const auto cfg = resolve_experiment(eval_flags);
      const auto report = run_experiment(cfg);
      write_experiment_outputs(report, eval_out);
      if (!eval_format.empty()) {
        switch (parse_report_format(eval_format)) {
          case ReportFormat::json: std::cout << report_to_json(report).dump(2) << "\n"; break;
          case ReportFormat::csv: std::cout << render_csv(report); break;
          case ReportFormat::markdown: std::cout << render_markdown({&report}); break;
        }
      }
      print_summary(report, fs::path(eval_out) / "report.json");
    } else if (*eval_ablate) {
      const auto cfg = resolve_experiment(ablate_flags);
      const auto points = run_ablation(cfg, ablate_axis, split_csv(ablate_values));
      write_ablation_outputs(ablate_axis, points, ablate_out);
      for (const auto& p : points)
        std::printf("%s=%s: ASR %.4f, Precision %.4f\n", ablate_axis.c_str(), p.value.c_str(), p.report.asr,
                    p.report.precision);
      std::printf("wrote %s\n", (fs::path(ablate_out) / "ablation.json").string().c_str());
    } else if (*defend_apply) {
      const auto kind = parse_defense_kind(d_kind);
      const auto seed = resolve_seed(d_seed);
      if (kind == DefenseKind::preprocess) {
        if (d_image.empty() || d_out.empty()) throw ValidationError("preprocess needs --image and --out");
        const auto img = read_image(d_image);
        d_params.validate();
        const auto out = d_scale ? preprocess_fixed(img, *d_scale, d_oy, d_ox) : preprocess_random(img, seed, d_params);
        write_image(out, d_out);
        std::printf("wrote %s\n", d_out.c_str());
      } else if (kind == DefenseKind::paraphrase) {
        if (d_question.empty()) throw ValidationError("paraphrase needs --question");
        std::printf("%s\n", paraphrase_question(StubParaphraser(), d_question, seed).c_str());
      } else if (kind == DefenseKind::dedup) {
        if (d_kb.empty() || d_out.empty()) throw ValidationError("dedup needs --kb and --out");
        const auto kb = load_kb(d_kb);
        DedupStats st;
        const auto filtered = dedup_filter(kb, &st);
        save_kb(filtered, d_out, surviving_manifest(load_eval_manifest(d_kb), filtered));
        std::printf("removed %zu sections (%zu malicious), %zu entries; wrote %s\n", st.sections_removed,
                    st.malicious_sections_removed, st.entries_removed, d_out.c_str());
      } else {
        throw ValidationError("defend apply needs a defense kind other than none");
      }
    } else if (*backend_probe) {
      std::vector<std::string> lines;
      if (p_transcript.empty()) {
        lines = default_probe_requests(p_dim);
      } else {
        std::ifstream in(p_transcript);
        std::string line;
        while (std::getline(in, line))
          if (!line.empty()) lines.push_back(line);
      }
      auto client = ProtocolClient::connect(p_endpoint);
      const auto report = probe_backend(*client, lines);
      std::ofstream rec;
      if (!p_record.empty()) rec.open(p_record);
      for (const auto& s : report.steps) {
        ojson req;
        try {
          req = ojson::parse(s.request);
        } catch (const nlohmann::json::exception&) {
        }
        const std::string op = req.is_object() && req.contains("op") && req["op"].is_string()
                                   ? req["op"].get<std::string>()
                                   : "(malformed)";
        std::printf("%-5s %-12s %s\n", s.passed ? "PASS" : "FAIL", op.c_str(), s.message.c_str());
        if (rec) rec << ojson{{"request", s.request}, {"response", s.response}}.dump() << "\n";
      }
      std::printf("%s: %zu/%zu steps passed, dim %d\n", report.passed() ? "conformant" : "NOT conformant",
                  static_cast<std::size_t>(std::count_if(report.steps.begin(), report.steps.end(),
                                                         [](const ProbeStep& s) { return s.passed; })),
                  lines.size(), report.dim);
      return report.passed() ? 0 : 2;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const RuntimeError& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
