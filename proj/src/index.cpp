#include "ragpoison/index.hpp"

#include <cstring>
#include <fstream>

#include "ragpoison/error.hpp"

namespace ragpoison {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'R', 'P', 'I', 'D', 'X', '0', '0', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::ifstream& in, const fs::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw ValidationError("truncated index file: " + path.string());
  return v;
}

std::string get_bytes(std::ifstream& in, std::size_t n, const fs::path& path) {
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw ValidationError("truncated index file: " + path.string());
  return s;
}

}  // namespace

EmbeddingIndex EmbeddingIndex::build(const Backend& backend, const KnowledgeBase& kb) {
  EmbeddingIndex idx;
  idx.dim_ = backend.dim();
  idx.kb_hash_ = kb.content_hash();
  idx.backend_hash_ = backend.descriptor().hash();
  idx.data_.reserve(kb.num_images() * static_cast<std::size_t>(idx.dim_));
  for (const auto& e : kb.entries()) {
    for (std::size_t n = 0; n < e.images.size(); ++n) {
      const auto v = backend.embed_image(*e.images[n]);
      idx.entry_ids_.push_back(e.id);
      idx.image_numbers_.push_back(static_cast<std::uint32_t>(n));
      for (double x : v) idx.data_.push_back(static_cast<float>(x));
    }
  }
  return idx;
}

void EmbeddingIndex::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
  put<std::uint64_t>(out, entry_ids_.size());
  std::string kh = kb_hash_, bh = backend_hash_;
  kh.resize(64, '0');
  bh.resize(64, '0');
  out.write(kh.data(), 64);
  out.write(bh.data(), 64);
  for (std::size_t i = 0; i < entry_ids_.size(); ++i) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(entry_ids_[i].size()));
    out.write(entry_ids_[i].data(), static_cast<std::streamsize>(entry_ids_[i].size()));
    put<std::uint32_t>(out, image_numbers_[i]);
  }
  out.write(reinterpret_cast<const char*>(data_.data()), static_cast<std::streamsize>(data_.size() * sizeof(float)));
  if (!out.flush()) throw RuntimeError("write failed: " + path.string());
}

EmbeddingIndex EmbeddingIndex::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open index " + path.string());
  if (get_bytes(in, sizeof kMagic, path) != std::string(kMagic, sizeof kMagic))
    throw ValidationError("not an embedding index (bad magic): " + path.string());
  if (get<std::uint32_t>(in, path) != kVersion) throw ValidationError("unsupported index version: " + path.string());
  EmbeddingIndex idx;
  idx.dim_ = static_cast<int>(get<std::uint32_t>(in, path));
  const auto count = get<std::uint64_t>(in, path);
  idx.kb_hash_ = get_bytes(in, 64, path);
  idx.backend_hash_ = get_bytes(in, 64, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in, path);
    if (len > 4096) throw ValidationError("corrupt id table in " + path.string());
    idx.entry_ids_.push_back(get_bytes(in, len, path));
    idx.image_numbers_.push_back(get<std::uint32_t>(in, path));
  }
  idx.data_.resize(count * static_cast<std::size_t>(idx.dim_));
  in.read(reinterpret_cast<char*>(idx.data_.data()), static_cast<std::streamsize>(idx.data_.size() * sizeof(float)));
  if (!in) throw ValidationError("truncated index file: " + path.string());
  return idx;
}

bool EmbeddingIndex::matches(const KnowledgeBase& kb, const Backend& backend) const {
  return dim_ == backend.dim() && kb_hash_ == kb.content_hash() && backend_hash_ == backend.descriptor().hash();
}

EmbeddingIndex EmbeddingIndex::load_or_build(const Backend& backend, const KnowledgeBase& kb, const fs::path& path,
                                             bool* rebuilt) {
  if (fs::exists(path)) {
    try {
      auto idx = load(path);
      if (idx.matches(kb, backend)) {
        if (rebuilt) *rebuilt = false;
        return idx;
      }
    } catch (const ValidationError&) {
      // Unreadable cache: rebuild it.
    }
  }
  auto idx = build(backend, kb);
  idx.save(path);
  if (rebuilt) *rebuilt = true;
  return idx;
}

}  // namespace ragpoison
