#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ragpoison/error.hpp"
#include "ragpoison/experiment.hpp"
#include "ragpoison/metrics.hpp"
#include "test_util.hpp"

using namespace ragpoison;
using ragpoison::testing::TempDir;

namespace {

EvalRecord record(bool success, std::vector<bool> reranked) {
  EvalRecord r;
  r.success = success;
  for (std::size_t i = 0; i < reranked.size(); ++i)
    r.reranked.push_back({"e" + std::to_string(i), "s00", reranked[i]});
  return r;
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.seed = 5;
  c.trials = 2;
  c.synth.num_entries = 100;
  c.synth.num_classes = 4;
  c.synth.sections_per_entry = 2;
  c.num_queries = 4;
  c.references_per_query = 20;
  c.attack.N = 2;
  c.attack.t = 5;
  return c;
}

}  // namespace

TEST(Metrics, AsrCountsSuccesses) {
  EXPECT_DOUBLE_EQ(asr({record(true, {}), record(false, {}), record(false, {}), record(false, {})}), 0.25);
  EXPECT_THROW(asr({}), ValidationError);
  EXPECT_TRUE(answer_success("It was the Commercial Aircraft Corporation of China (COMAC).",
                             "commercial aircraft corporation of china"));
  EXPECT_FALSE(answer_success("Boeing", "COMAC"));
}

TEST(Metrics, PrecisionIsMicroAveraged) {
  EXPECT_DOUBLE_EQ(precision({record(false, {true, true, true, true, false})}, 5), 0.8);
  // 2/3 and 1/2 -> (2+1)/(3+2).
  EXPECT_DOUBLE_EQ(precision({record(false, {true, true, false}), record(false, {true, false})}, 5), 0.6);
  // Truncated to k2.
  EXPECT_DOUBLE_EQ(precision({record(false, {true, false, false})}, 1), 1.0);
  EXPECT_DOUBLE_EQ(precision({record(false, {})}, 5), 0.0);
  EXPECT_DOUBLE_EQ(record(false, {true, false}).precision(), 0.5);
  EXPECT_THROW(precision({}, 0), ValidationError);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  ExperimentConfig c;
  EXPECT_THROW(apply_config_json(c, nlohmann::ordered_json::parse(R"({"sead": 1})")), ValidationError);
  EXPECT_THROW(apply_config_json(c, nlohmann::ordered_json::parse(R"({"attack": {"n": 3}})")), ValidationError);
  EXPECT_THROW(apply_config_json(c, nlohmann::ordered_json::parse(R"({"trials": "x"})")), ValidationError);
  apply_config_json(c, nlohmann::ordered_json::parse(R"({"attack": {"kind": "naive", "N": 3}, "trials": 2})"));
  EXPECT_EQ(c.attack_kind, AttackKind::naive);
  EXPECT_EQ(c.attack.N, 3);
  EXPECT_EQ(c.trials, 2);
  c.trials = 0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c = small_config();
  c.attack_kind = AttackKind::poisoned_rag;
  c.defenses = {DefenseKind::paraphrase, DefenseKind::dedup};
  c.pipeline.reranker_enabled = false;
  c.extra_vocabulary = {"x", "y"};
  const auto j = config_to_json(c);
  ExperimentConfig back;
  apply_config_json(back, j);
  EXPECT_EQ(config_to_json(back), j);
}

TEST(Config, LoadResolvesRelativePaths) {
  TempDir dir("cfg");
  std::filesystem::create_directories(dir / "kbdir");
  {
    std::ofstream(dir / "c.json") << R"({"kb": {"path": "kbdir"}, "seed": 9})";
  }
  const auto c = load_config(dir / "c.json");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.kb_path, (dir / "kbdir").string());
  EXPECT_THROW(load_config(dir / "missing.json"), ValidationError);
  {
    std::ofstream(dir / "bad.json") << "{oops";
  }
  EXPECT_THROW(load_config(dir / "bad.json"), ValidationError);
}

TEST(Report, MarkdownMatchesGoldenFile) {
  EvalReport a, b, c;
  a.asr = 0.9;
  a.precision = 0.876;
  b.config.kb_path = "/data/evqa_kb";
  b.config.attack_kind = AttackKind::naive;
  b.config.pipeline.reranker_enabled = false;
  b.config.defenses = {DefenseKind::paraphrase};
  b.asr = 0.05;
  b.precision = 0.4;
  c.config.synth.num_entries = 200;
  c.config.attack_kind = AttackKind::none;
  const auto golden = ragpoison::testing::read_file(std::filesystem::path(RAGPOISON_SOURCE_DIR) /
                                                    "tests/golden/report_table.md");
  EXPECT_EQ(render_markdown({&a, &b, &c}), golden);
}

TEST(Report, CsvHasOneRowPerRecordPlusSummary) {
  EvalReport r;
  r.records = {record(true, {true, false}), record(false, {false})};
  r.records[0].query_id = "q,1";
  r.records[0].answer = "say \"hi\"";
  r.asr = 0.5;
  r.precision = 1.0 / 3;
  const auto csv = render_csv(r);
  std::istringstream in(csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0].rfind("trial,query_id,success,", 0), 0u);
  EXPECT_NE(lines[1].find("\"q,1\""), std::string::npos);
  EXPECT_NE(lines[1].find("\"say \"\"hi\"\"\""), std::string::npos);
  EXPECT_EQ(lines[3].rfind("summary,all,", 0), 0u);
}

TEST(Report, FormatsParse) {
  EXPECT_EQ(parse_report_format("md"), ReportFormat::markdown);
  EXPECT_EQ(parse_report_format("csv"), ReportFormat::csv);
  EXPECT_THROW(parse_report_format("xml"), ValidationError);
}

TEST(Experiment, NoAttackHasZeroPrecisionAndAsr) {
  auto c = small_config();
  c.attack_kind = AttackKind::none;
  const auto r = run_experiment(c);
  EXPECT_EQ(r.records.size(), 8u);
  EXPECT_DOUBLE_EQ(r.precision, 0.0);
  EXPECT_DOUBLE_EQ(r.asr, 0.0);
  EXPECT_EQ(r.injected_entries, 0);
}

TEST(Experiment, DeterministicAndJsonRoundTrips) {
  const auto c = small_config();
  const auto a = run_experiment(c);
  const auto b = run_experiment(c);
  const auto ja = strip_timings(report_to_json(a));
  EXPECT_EQ(ja, strip_timings(report_to_json(b)));
  EXPECT_EQ(a.records.size(), 8u);
  EXPECT_EQ(a.injected_entries, 2 * 4 * 2);
  EXPECT_GT(a.asr, 0.5);
  EXPECT_EQ(ja.dump().find("_seconds"), std::string::npos);

  const auto back = report_summary_from_json(report_to_json(a));
  EXPECT_DOUBLE_EQ(back.asr, a.asr);
  EXPECT_DOUBLE_EQ(back.precision, a.precision);
  EXPECT_EQ(back.asr_per_trial, a.asr_per_trial);
  EXPECT_EQ(back.injected_entries, a.injected_entries);
  EXPECT_EQ(config_to_json(back.config), config_to_json(a.config));

  auto other = c;
  other.seed = 6;
  EXPECT_NE(strip_timings(report_to_json(run_experiment(other))), ja);
}

TEST(Experiment, ManifestRoundTrip) {
  auto c = small_config();
  c.trials = 1;
  const auto r = run_experiment(c);
  ASSERT_FALSE(r.manifest.empty());
  const auto back = manifest_records_from_json(manifest_records_to_json(r.manifest));
  ASSERT_EQ(back.size(), r.manifest.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].entry_id, r.manifest[i].entry_id);
    EXPECT_EQ(back[i].center_index, r.manifest[i].center_index);
    EXPECT_DOUBLE_EQ(back[i].final_cos, r.manifest[i].final_cos);
  }
}

TEST(Experiment, OutputsAreWritten) {
  TempDir dir("outputs");
  auto c = small_config();
  c.trials = 1;
  const auto r = run_experiment(c);
  write_experiment_outputs(r, dir.path());
  for (const char* f : {"report.json", "records.csv", "report.md", "attack_manifest.json"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
}

TEST(Ablation, AxesAndLabels) {
  ExperimentConfig c;
  apply_axis(c, "N", "3");
  EXPECT_EQ(c.attack.N, 3);
  apply_axis(c, "k2", "1");
  EXPECT_EQ(c.pipeline.k2, 1);
  EXPECT_EQ(c.pipeline.context_consumed, 1);
  apply_axis(c, "backend", "toy:7:64");
  EXPECT_EQ(c.backend.seed, 7u);
  EXPECT_EQ(c.backend.dim, 64);
  apply_axis(c, "attack", "poisoned-rag");
  EXPECT_EQ(method_label(c), "PoisonedRAG");
  apply_axis(c, "defense", "dedup");
  EXPECT_EQ(method_label(c), "PoisonedRAG + dedup");
  apply_axis(c, "defense", "none");
  EXPECT_TRUE(c.defenses.empty());
  EXPECT_THROW(apply_axis(c, "colour", "red"), ValidationError);
  EXPECT_THROW(apply_axis(c, "N", "many"), ValidationError);
  EXPECT_THROW(run_ablation(small_config(), "N", {"1", "x"}), ValidationError);
}

TEST(Ablation, MorePoisonNeverHurtsMuch) {
  auto c = small_config();
  c.trials = 1;
  const auto pts = run_ablation(c, "N", {"0", "2"});
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_DOUBLE_EQ(pts[0].report.asr, 0.0);
  EXPECT_GE(pts[1].report.asr, pts[0].report.asr);
  const auto csv = render_ablation_csv("N", pts);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}
