#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragpoison/attack.hpp"
#include "ragpoison/config.hpp"
#include "ragpoison/defense.hpp"
#include "ragpoison/metrics.hpp"
#include "ragpoison/synth.hpp"

namespace ragpoison {

inline constexpr const char* kToolVersion = "0.1.0";

struct EvalReport {
  ExperimentConfig config;
  std::vector<EvalRecord> records;
  double asr = 0.0;
  double precision = 0.0;
  std::vector<double> asr_per_trial;
  std::vector<double> precision_per_trial;
  int malicious_texts = 0;
  double mean_queries_per_text = 0.0;
  double mean_rounds_per_text = 0.0;
  int injected_entries = 0;
  DedupStats dedup;
  double mean_image_craft_seconds = 0.0;  // per crafted entry
  double mean_text_craft_seconds = 0.0;
  double total_seconds = 0.0;
  std::vector<ManifestRecord> manifest;
  std::vector<int> manifest_trials;  // trial of each manifest record
};

std::uint64_t trial_seed(const ExperimentConfig& cfg, int trial);

/// Gold and target answers of all queries, plus extra words; the stub
/// answer generator's candidate list.
std::vector<std::string> answer_vocabulary(const std::vector<QueryCase>& queries,
                                           const std::vector<std::string>& extra);

/// Malicious entries for each query. References come from `sampler` when
/// given, else from same-class KB images (needs class labels).
CraftOutput craft_queries(const ExperimentConfig& config, const Backend& backend, const CorpusGenerator& corpus,
                          const AnswerGenerator& oracle, const KnowledgeBase& kb,
                          const std::vector<QueryCase>& queries, const std::map<std::string, std::string>& classes,
                          const ClassSampler* sampler, std::uint64_t trial_seed);

/// craft_queries for config.kb_path with trial 0's seed; what `eval run`
/// would inject into that KB on its first trial.
CraftOutput craft_attack_for_kb(const ExperimentConfig& config);

/// Builds (or loads) the KB, crafts and injects the attack, applies defenses
/// and answers every query, for each trial. Deterministic per config.seed.
EvalReport run_experiment(const ExperimentConfig& config);

struct AblationPoint {
  std::string value;
  EvalReport report;
};

/// Axes: N, V, L, k1, k2, backend ("toy[:seed[:dim]]" or an endpoint),
/// plus attack (kind names) and defense (defense names, "none" for none).
void apply_axis(ExperimentConfig& cfg, const std::string& axis, const std::string& value);
std::vector<AblationPoint> run_ablation(const ExperimentConfig& base, const std::string& axis,
                                        const std::vector<std::string>& values);

/// Display name used in the markdown grid, e.g. "Spa-VLM (w/o reranker)".
std::string method_label(const ExperimentConfig& cfg);

nlohmann::ordered_json record_to_json(const EvalRecord& r);
nlohmann::ordered_json report_to_json(const EvalReport& report);
nlohmann::ordered_json manifest_to_json(const EvalReport& report);
nlohmann::ordered_json manifest_records_to_json(const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> manifest_records_from_json(const nlohmann::ordered_json& j);
/// Copy with every "*_seconds" key removed (for determinism checks).
nlohmann::ordered_json strip_timings(const nlohmann::ordered_json& j);
/// Summary fields of a report.json (ignores records) for round-trip checks.
EvalReport report_summary_from_json(const nlohmann::ordered_json& j);

enum class ReportFormat { json, csv, markdown };
ReportFormat parse_report_format(const std::string& s);

std::string render_csv(const EvalReport& report);
std::string render_markdown(const std::vector<const EvalReport*>& reports);
void emit_report(const EvalReport& report, ReportFormat format, const std::filesystem::path& path);

/// report.json, records.csv, report.md, attack_manifest.json.
void write_experiment_outputs(const EvalReport& report, const std::filesystem::path& dir);

std::string render_ablation_csv(const std::string& axis, const std::vector<AblationPoint>& points);
nlohmann::ordered_json ablation_to_json(const std::string& axis, const std::vector<AblationPoint>& points);
/// ablation.csv, ablation.json, ablation.md.
void write_ablation_outputs(const std::string& axis, const std::vector<AblationPoint>& points,
                            const std::filesystem::path& dir);

}  // namespace ragpoison
