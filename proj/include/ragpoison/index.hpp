#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ragpoison/embed.hpp"
#include "ragpoison/kb.hpp"

namespace ragpoison {

/// One f32 embedding per (entry, image), rows in KB order.
///
/// File layout (little-endian): "RPIDX001", u32 version, u32 dim, u64 count,
/// 64-byte hex KB hash, 64-byte hex backend hash, then per row a u32 length +
/// entry id bytes and u32 image number, then count*dim f32 values.
class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;

  static EmbeddingIndex build(const Backend& backend, const KnowledgeBase& kb);
  static EmbeddingIndex load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Loads `path` if it exists and matches both hashes, else builds and
  /// saves. `rebuilt` reports which happened.
  static EmbeddingIndex load_or_build(const Backend& backend, const KnowledgeBase& kb,
                                      const std::filesystem::path& path, bool* rebuilt = nullptr);

  bool matches(const KnowledgeBase& kb, const Backend& backend) const;

  int dim() const { return dim_; }
  std::size_t count() const { return entry_ids_.size(); }
  const std::string& entry_id(std::size_t row) const { return entry_ids_[row]; }
  std::uint32_t image_number(std::size_t row) const { return image_numbers_[row]; }
  std::span<const float> vector(std::size_t row) const {
    return {data_.data() + row * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  const std::string& kb_hash() const { return kb_hash_; }
  const std::string& backend_hash() const { return backend_hash_; }

  friend bool operator==(const EmbeddingIndex&, const EmbeddingIndex&) = default;

 private:
  int dim_ = 0;
  std::vector<std::string> entry_ids_;
  std::vector<std::uint32_t> image_numbers_;
  std::vector<float> data_;
  std::string kb_hash_;
  std::string backend_hash_;
};

}  // namespace ragpoison
