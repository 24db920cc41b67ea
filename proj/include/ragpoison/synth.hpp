#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ragpoison/kb.hpp"
#include "ragpoison/rng.hpp"

namespace ragpoison {

struct SynthParams {
  int num_entries = 1000;
  int num_classes = 20;
  int sections_per_entry = 3;
  std::uint64_t seed = 1;
  int height = 64;
  int width = 64;
  double base_level = 0.15;
  double class_contrast = 0.05;
  double block_jitter = 0.04;  // per 8x8 block and channel
  double pixel_noise = 0.1;
  // Fraction of the gold entry's block jitter the query image shares.
  double query_gold_share = 0.4;
};

struct SynthResult {
  KnowledgeBase kb;
  std::vector<QueryCase> queries;  // one per class
  std::map<std::string, std::string> entry_classes;
  std::vector<std::string> class_labels;
  SynthParams params;

  EvalManifest manifest() const;
};

SynthResult synth_kb(const SynthParams& params);
SynthResult synth_kb(int num_entries, int num_classes, int sections_per_entry, std::uint64_t seed);

/// Fresh samples of a class (new block jitter and pixel noise), used for
/// attacker reference images. Caches the class patterns.
class ClassSampler {
 public:
  explicit ClassSampler(SynthParams params);
  Image sample(int class_index, Rng& rng) const;
  int num_classes() const { return params_.num_classes; }

 private:
  SynthParams params_;
  std::vector<std::vector<double>> patterns_;
};

Image synth_class_image(const SynthParams& params, int class_index, Rng& rng);

/// Index of a class label produced by synth_kb ("c00", "c01", ...), or -1.
int synth_class_index(const std::string& label);

/// Random entry id in the synthetic id format ("e" + 12 hex digits).
std::string random_entry_id(Rng& rng);

}  // namespace ragpoison
