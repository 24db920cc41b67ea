#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragpoison/attack.hpp"
#include "ragpoison/defense.hpp"
#include "ragpoison/embed.hpp"
#include "ragpoison/pipeline.hpp"
#include "ragpoison/prompts.hpp"
#include "ragpoison/synth.hpp"

namespace ragpoison {

struct GeneratorConfig {
  std::string kind = "stub";  // stub | external
  std::string endpoint;
  PromptStyle prompt_style = PromptStyle::evqa;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 1;
  int trials = 5;

  // Knowledge base: a directory (with eval.json queries) or synthetic params.
  std::string kb_path;
  SynthParams synth;

  int num_queries = 20;  // M; capped by available queries
  int references_per_query = 100;

  BackendDescriptor backend;
  GeneratorConfig generator;
  PipelineConfig pipeline;

  AttackKind attack_kind = AttackKind::spa_vlm;
  AttackConfig attack;  // attack.seed is derived per trial from `seed`
  std::string entries_path;  // pre-crafted entries (requires kb_path)

  std::vector<DefenseKind> defenses;
  PreprocessParams preprocess;

  std::vector<std::string> extra_vocabulary;

  void validate() const;
};

/// Overlays keys present in `j` onto `cfg`. Unknown keys are rejected.
void apply_config_json(ExperimentConfig& cfg, const nlohmann::ordered_json& j);
ExperimentConfig load_config(const std::filesystem::path& path, const ExperimentConfig& base = {});
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);

}  // namespace ragpoison
