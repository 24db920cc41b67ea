#include "ragpoison/defense.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ragpoison/error.hpp"
#include "ragpoison/hash.hpp"
#include "ragpoison/rng.hpp"
#include "ragpoison/text.hpp"

namespace ragpoison {

void PreprocessParams::validate() const {
  if (!(min_scale > 0.0 && min_scale <= max_scale)) throw ValidationError("preprocess scale range is invalid");
}

Image preprocess_fixed(const Image& image, double scale, int offset_y, int offset_x) {
  if (!(scale > 0.0)) throw ValidationError("scale must be > 0");
  const int h = image.height(), w = image.width();
  const int nh = std::max(1, static_cast<int>(std::lround(h * scale)));
  const int nw = std::max(1, static_cast<int>(std::lround(w * scale)));
  const Image resized = resize_bilinear(image, nh, nw);
  Image out(h, w, 0.0);
  // Source pixel for output (y, x) is resized(y - dy, x - dx).
  const int dy = nh <= h ? std::clamp(offset_y, 0, h - nh) : -std::clamp(offset_y, 0, nh - h);
  const int dx = nw <= w ? std::clamp(offset_x, 0, w - nw) : -std::clamp(offset_x, 0, nw - w);
  for (int y = 0; y < h; ++y) {
    const int sy = y - dy;
    if (sy < 0 || sy >= nh) continue;
    for (int x = 0; x < w; ++x) {
      const int sx = x - dx;
      if (sx < 0 || sx >= nw) continue;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = std::clamp(resized.at(sy, sx, c), 0.0, 1.0);
    }
  }
  return out;
}

Image preprocess_random(const Image& image, std::uint64_t seed, const PreprocessParams& params) {
  params.validate();
  Rng rng(seed);
  const double scale = rng.uniform(params.min_scale, params.max_scale);
  const int nh = std::max(1, static_cast<int>(std::lround(image.height() * scale)));
  const int nw = std::max(1, static_cast<int>(std::lround(image.width() * scale)));
  const int oy = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::abs(nh - image.height())) + 1));
  const int ox = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::abs(nw - image.width())) + 1));
  return preprocess_fixed(image, scale, oy, ox);
}

std::string paraphrase_question(const Paraphraser& paraphraser, const std::string& question, std::uint64_t seed) {
  if (question.empty()) throw ValidationError("cannot paraphrase an empty question");
  std::string out = paraphraser.paraphrase(question, seed);
  if (normalize_ws_lower(out).empty()) throw RuntimeError("paraphraser returned an empty question");
  return out;
}

KnowledgeBase dedup_filter(const KnowledgeBase& kb, DedupStats* stats) {
  std::set<Sha256Digest> seen;
  DedupStats st;
  std::vector<KnowledgeEntry> kept;
  for (const auto& e : kb.entries()) {
    KnowledgeEntry copy = e;
    copy.sections.clear();
    for (const auto& s : e.sections) {
      if (seen.insert(sha256(s.text)).second) {
        copy.sections.push_back(s);
      } else {
        ++st.sections_removed;
        if (s.is_malicious) ++st.malicious_sections_removed;
      }
    }
    if (copy.sections.empty()) {
      ++st.entries_removed;
      continue;
    }
    kept.push_back(std::move(copy));
  }
  if (stats) *stats = st;
  return KnowledgeBase(std::move(kept), kb.meta());
}

DefenseKind parse_defense_kind(const std::string& s) {
  if (s == "none") return DefenseKind::none;
  if (s == "preprocess") return DefenseKind::preprocess;
  if (s == "paraphrase") return DefenseKind::paraphrase;
  if (s == "dedup") return DefenseKind::dedup;
  throw ValidationError("unknown defense '" + s + "' (expected none, preprocess, paraphrase, dedup)");
}

const char* to_string(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::none: return "none";
    case DefenseKind::preprocess: return "preprocess";
    case DefenseKind::paraphrase: return "paraphrase";
    case DefenseKind::dedup: return "dedup";
  }
  return "?";
}

}  // namespace ragpoison
