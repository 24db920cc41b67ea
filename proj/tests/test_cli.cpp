#include <gtest/gtest.h>

#include <fstream>

#include "ragpoison/experiment.hpp"
#include "ragpoison/kb.hpp"
#include "test_util.hpp"

using namespace ragpoison;
using ragpoison::testing::read_file;
using ragpoison::testing::run_command;
using ragpoison::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::string cli(const std::string& args) { return std::string(RAGPOISON_CLI) + " " + args + " 2>/dev/null"; }

void write_small_config(const fs::path& p, const std::string& kb = "") {
  std::ofstream out(p);
  out << R"({"trials": 1, "queries": {"count": 3, "references_per_query": 20},)"
      << R"( "attack": {"N": 2, "t": 5})";
  if (kb.empty())
    out << R"(, "kb": {"synth": {"num_entries": 80, "num_classes": 3, "sections_per_entry": 2}})";
  else
    out << R"(, "kb": {"path": ")" << kb << R"("})";
  out << "}";
}

}  // namespace

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_command(cli("--help")), 0);
  EXPECT_EQ(run_command(cli("--version")), 0);
  EXPECT_EQ(run_command(cli("")), 1);
  EXPECT_EQ(run_command(cli("eval run --bogus")), 1);
  EXPECT_EQ(run_command(cli("kb validate --kb /nonexistent/kb")), 1);
  EXPECT_EQ(run_command(cli("eval run --trials 0 --out /tmp/unused")), 1);
  EXPECT_EQ(run_command(cli("backend probe --endpoint tcp://127.0.0.1:1")), 2);
}

TEST(Cli, KbSynthValidateInspect) {
  TempDir dir("cli-kb");
  const auto kb = (dir / "kb").string();
  ASSERT_EQ(run_command(cli("kb synth --out " + kb + " --entries 40 --classes 4 --sections 2 --seed 3")), 0);
  std::string out;
  EXPECT_EQ(run_command(cli("kb validate --kb " + kb), &out), 0);
  EXPECT_EQ(load_kb(kb).size(), 40u);
  EXPECT_EQ(run_command(cli("kb inspect --kb " + kb), &out), 0);
  const auto j = nlohmann::ordered_json::parse(out);
  EXPECT_EQ(j.at("entries").get<int>(), 40);
  const auto first = load_kb(kb).entries()[0].id;
  EXPECT_EQ(run_command(cli("kb inspect --kb " + kb + " --entry " + first), &out), 0);
  EXPECT_NE(out.find(first), std::string::npos);
  EXPECT_EQ(run_command(cli("kb inspect --kb " + kb + " --entry nope")), 1);
}

TEST(Cli, EvalRunMatchesLibrary) {
  TempDir dir("cli-eval");
  write_small_config(dir / "c.json");
  ASSERT_EQ(run_command(cli("eval run --seed 4 --config " + (dir / "c.json").string() + " --out " +
                            (dir / "out").string())),
            0);
  const auto got = nlohmann::ordered_json::parse(read_file(dir / "out/report.json"));
  ExperimentConfig base;
  base.seed = 4;
  const auto expected = report_to_json(run_experiment(load_config(dir / "c.json", base)));
  EXPECT_EQ(strip_timings(got), strip_timings(expected));
  for (const char* f : {"records.csv", "report.md", "attack_manifest.json"}) EXPECT_TRUE(fs::exists(dir / "out" / f));
}

TEST(Cli, EnvironmentSeedIsTheDefault) {
  TempDir dir("cli-env");
  write_small_config(dir / "c.json");
  const auto cfg = (dir / "c.json").string();
  ASSERT_EQ(run_command("RAGPOISON_SEED=9 " + cli("eval run --config " + cfg + " --out " + (dir / "a").string())), 0);
  ASSERT_EQ(run_command(cli("eval run --seed 9 --config " + cfg + " --out " + (dir / "b").string())), 0);
  ASSERT_EQ(run_command("RAGPOISON_SEED=2 " +
                        cli("eval run --seed 9 --config " + cfg + " --out " + (dir / "c").string())),
            0);
  const auto a = strip_timings(nlohmann::ordered_json::parse(read_file(dir / "a/report.json")));
  EXPECT_EQ(a, strip_timings(nlohmann::ordered_json::parse(read_file(dir / "b/report.json"))));
  EXPECT_EQ(a, strip_timings(nlohmann::ordered_json::parse(read_file(dir / "c/report.json"))));
  EXPECT_EQ(a["config"]["seed"], 9);
}

TEST(Cli, AttackCraftMatchesLibraryAndInjects) {
  TempDir dir("cli-craft");
  const auto kb = (dir / "kb").string();
  ASSERT_EQ(run_command(cli("kb synth --out " + kb + " --entries 60 --classes 3 --sections 2 --seed 2")), 0);
  write_small_config(dir / "c.json", kb);
  const auto cfg = (dir / "c.json").string();
  ASSERT_EQ(run_command(cli("attack craft --config " + cfg + " --out " + (dir / "craft").string())), 0);

  const auto lib = craft_attack_for_kb(load_config(cfg));
  save_entries(lib.entries, dir / "lib");
  EXPECT_EQ(read_file(dir / "craft/entries.jsonl"), read_file(dir / "lib/entries.jsonl"));
  for (const auto& e : lib.entries) {
    const auto name = "images/" + e.id + "_0.png";
    EXPECT_EQ(read_file(dir / ("craft/" + name)), read_file(dir / ("lib/" + name))) << name;
  }
  const auto manifest = nlohmann::ordered_json::parse(read_file(dir / "craft/attack_manifest.json"));
  EXPECT_EQ(manifest_records_from_json(manifest).size(), lib.manifest.size());

  ASSERT_EQ(run_command(cli("kb inject --kb " + kb + " --entries " + (dir / "craft").string() + " --out " +
                            (dir / "poisoned").string())),
            0);
  const auto poisoned = load_kb(dir / "poisoned");
  EXPECT_EQ(poisoned.size(), 60u + lib.entries.size());
  EXPECT_EQ(poisoned.malicious_ids().size(), lib.entries.size());
  EXPECT_EQ(load_eval_manifest(dir / "poisoned").queries.size(), 3u);

  // Evaluating pre-crafted entries matches the library on the same files.
  // It need not match a live run: saved images are quantized to 8 bits,
  // which can reorder near-tied retrieval scores.
  ASSERT_EQ(run_command(cli("eval run --config " + cfg + " --entries " + (dir / "craft").string() + " --out " +
                            (dir / "pre").string())),
            0);
  const auto pre = nlohmann::ordered_json::parse(read_file(dir / "pre/report.json"));
  auto with_entries = load_config(cfg);
  with_entries.entries_path = (dir / "craft").string();
  EXPECT_EQ(strip_timings(pre), strip_timings(report_to_json(run_experiment(with_entries))));
  EXPECT_EQ(pre["config"]["attack"]["kind"], "spa-vlm");
}

TEST(Cli, IndexAndQuery) {
  TempDir dir("cli-query");
  const auto kb = (dir / "kb").string();
  ASSERT_EQ(run_command(cli("kb synth --out " + kb + " --entries 40 --classes 4 --sections 2")), 0);
  std::string out;
  ASSERT_EQ(run_command(cli("index build --kb " + kb), &out), 0);
  EXPECT_NE(out.find("built"), std::string::npos);
  ASSERT_EQ(run_command(cli("index build --kb " + kb), &out), 0);
  EXPECT_NE(out.find("reused"), std::string::npos);
  const auto q = load_eval_manifest(kb).queries.at(0);
  ASSERT_EQ(run_command(cli("query run --kb " + kb + " --query " + q.id + " --json"), &out), 0);
  const auto j = nlohmann::ordered_json::parse(out);
  EXPECT_TRUE(j.contains("answer"));
  EXPECT_EQ(run_command(cli("query run --kb " + kb + " --query nope")), 1);
}

TEST(Cli, DefendApply) {
  TempDir dir("cli-defend");
  Rng rng(1);
  write_png(ragpoison::testing::random_image(rng, 32, 32), dir / "in.png");
  EXPECT_EQ(run_command(cli("defend apply --kind preprocess --image " + (dir / "in.png").string() + " --out " +
                            (dir / "out.png").string() + " --seed 3")),
            0);
  EXPECT_TRUE(read_png(dir / "out.png").same_shape(Image(32, 32)));
  std::string out;
  EXPECT_EQ(run_command(cli("defend apply --kind paraphrase --question \"What does this symbol represent?\""), &out),
            0);
  EXPECT_FALSE(out.empty());
  EXPECT_EQ(run_command(cli("defend apply --kind firewall")), 1);
}

TEST(Cli, BackendProbeAgainstMock) {
  TempDir dir("cli-probe");
  std::string out;
  const std::string ep = std::string("'stdio:") + RAGPOISON_MOCK + "'";
  EXPECT_EQ(run_command(cli("backend probe --endpoint " + ep + " --record " + (dir / "t.jsonl").string()), &out), 0)
      << out;
  EXPECT_NE(out.find("PASS"), std::string::npos);
  const std::string bad = std::string("'stdio:") + RAGPOISON_MOCK + " --bad-norm'";
  EXPECT_EQ(run_command(cli("backend probe --endpoint " + bad), &out), 2);
  EXPECT_NE(out.find("FAIL"), std::string::npos);
}

TEST(Cli, DemoConfigReachesHighAsr) {
  TempDir dir("cli-demo");
  const auto cfg = (fs::path(RAGPOISON_SOURCE_DIR) / "configs/demo.json").string();
  ASSERT_EQ(run_command(cli("eval run --config " + cfg + " --out " + (dir / "out").string())), 0);
  const auto j = nlohmann::ordered_json::parse(read_file(dir / "out/report.json"));
  EXPECT_GE(j["summary"]["asr"].get<double>(), 0.8);
}
