#pragma once

#include <cstdint>
#include <string>

#include "ragpoison/generator.hpp"
#include "ragpoison/image.hpp"
#include "ragpoison/kb.hpp"

namespace ragpoison {

struct PreprocessParams {
  double min_scale = 0.9;
  double max_scale = 1.1;

  void validate() const;
};

/// Resize by `scale` (bilinear), then zero-pad (scale < 1) or crop (scale > 1)
/// back to the input size with the resized image's top-left at (-)offset.
/// Offsets are clamped to the valid range.
Image preprocess_fixed(const Image& image, double scale, int offset_y, int offset_x);

/// Random scale in [min_scale, max_scale] and random offset, from `seed`.
Image preprocess_random(const Image& image, std::uint64_t seed, const PreprocessParams& params = {});

std::string paraphrase_question(const Paraphraser& paraphraser, const std::string& question, std::uint64_t seed);

struct DedupStats {
  std::size_t sections_removed = 0;
  std::size_t entries_removed = 0;
  std::size_t malicious_sections_removed = 0;
};

/// Drops every section whose raw-byte SHA-256 was already seen (scan in KB
/// order, first occurrence kept) and entries left without sections.
KnowledgeBase dedup_filter(const KnowledgeBase& kb, DedupStats* stats = nullptr);

enum class DefenseKind { none, preprocess, paraphrase, dedup };
DefenseKind parse_defense_kind(const std::string& s);
const char* to_string(DefenseKind kind);

}  // namespace ragpoison
