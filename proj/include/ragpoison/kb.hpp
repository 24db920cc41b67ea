#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ragpoison/image.hpp"

namespace ragpoison {

struct TextSection {
  std::string entry_id;
  std::string section_id;
  std::string text;
  bool is_malicious = false;  // ground truth, evaluation only

  friend bool operator==(const TextSection&, const TextSection&) = default;
};

struct KnowledgeEntry {
  std::string id;
  std::string title;
  std::vector<ImagePtr> images;
  std::vector<TextSection> sections;
  bool is_malicious = false;
};

/// Same id, title, section texts and pixel values.
bool same_content(const KnowledgeEntry& a, const KnowledgeEntry& b);

struct KbMeta {
  std::string name = "kb";
  std::uint64_t seed = 0;
  int image_height = 64;
  int image_width = 64;
};

/// Immutable, id-sorted collection of entries.
class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  /// Validates and sorts. Throws ValidationError on duplicate ids, empty
  /// entries, empty texts, or images of the wrong size / out of [0, 1].
  KnowledgeBase(std::vector<KnowledgeEntry> entries, KbMeta meta);

  const std::vector<KnowledgeEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const KbMeta& meta() const { return meta_; }

  const KnowledgeEntry* find(const std::string& id) const;
  std::size_t num_sections() const;
  std::size_t num_images() const;
  std::vector<std::string> malicious_ids() const;

  /// SHA-256 over pipeline-visible content (ids, titles, texts, pixels).
  /// Ground-truth flags are excluded.
  std::string content_hash() const;

 private:
  std::vector<KnowledgeEntry> entries_;
  KbMeta meta_;
};

struct QueryCase {
  std::string id;
  Image query_image;
  std::string question;
  std::string gold_answer;
  std::string target_answer;
  std::string class_label;
};

void validate_query(const QueryCase& q);

/// Sidecar evaluation metadata (eval.json). entry_classes maps entry id to
/// class label and is only needed to pick non-target base images.
struct EvalManifest {
  std::vector<std::string> malicious_ids;
  std::vector<QueryCase> queries;
  std::map<std::string, std::string> entry_classes;
};

/// Reads entries.jsonl, kb_meta.json (optional) and applies malicious_ids
/// from eval.json when present.
KnowledgeBase load_kb(const std::filesystem::path& dir);

/// Writes entries.jsonl, images/*.png, kb_meta.json and eval.json. Malicious
/// flags go to eval.json only; `extra` supplies queries and class labels.
void save_kb(const KnowledgeBase& kb, const std::filesystem::path& dir,
             const EvalManifest& extra = {});

/// Loads eval.json (empty manifest if the file is absent).
EvalManifest load_eval_manifest(const std::filesystem::path& dir);

/// Parses a standalone entries.jsonl (e.g. crafted attack entries) whose
/// image paths are relative to the file's directory.
std::vector<KnowledgeEntry> load_entries(const std::filesystem::path& jsonl, int height, int width);
void save_entries(const std::vector<KnowledgeEntry>& entries, const std::filesystem::path& dir);

/// D ∪ P. Injected entries (and their sections) are flagged malicious.
KnowledgeBase inject_entries(const KnowledgeBase& kb, std::vector<KnowledgeEntry> malicious);

}  // namespace ragpoison
