#include "ragpoison/pipeline.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "ragpoison/error.hpp"

namespace ragpoison {

void PipelineConfig::validate() const {
  if (k1 < 1) throw ValidationError("k1 must be >= 1");
  if (k2 < 1) throw ValidationError("k2 must be >= 1");
  if (context_consumed < 0 || context_consumed > k2) throw ValidationError("context_consumed must be in [0, k2]");
}

namespace {

bool section_before(const ScoredSection& a, const ScoredSection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.section.entry_id != b.section.entry_id) return a.section.entry_id < b.section.entry_id;
  return a.section.section_id < b.section.section_id;
}

}  // namespace

RetrievalResult retrieve(const KnowledgeBase& kb, const EmbeddingIndex& index, const EmbeddingVec& q, int k1) {
  if (kb.empty()) throw ValidationError("cannot retrieve from an empty knowledge base");
  if (k1 < 1) throw ValidationError("k1 must be >= 1");
  if (index.count() != kb.num_images() || static_cast<std::size_t>(index.dim()) != q.size())
    throw ValidationError("embedding index does not match the knowledge base or backend");

  struct Scored {
    std::size_t entry;
    double score;
  };
  std::vector<Scored> scored;
  scored.reserve(kb.size());
  std::size_t row = 0;
  const auto& entries = kb.entries();
  for (std::size_t e = 0; e < entries.size(); ++e) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < entries[e].images.size(); ++n, ++row) {
      if (index.entry_id(row) != entries[e].id) throw ValidationError("embedding index rows are out of sync with the KB");
      const auto v = index.vector(row);
      double s = 0.0;
      for (std::size_t i = 0; i < q.size(); ++i) s += static_cast<double>(v[i]) * q[i];
      best = std::max(best, s);
    }
    scored.push_back({e, best});
  }
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(k1), scored.size());
  // Entries are id-sorted, so a stable ordering on score alone breaks ties by id.
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                    [](const Scored& a, const Scored& b) { return a.score != b.score ? a.score > b.score : a.entry < b.entry; });

  RetrievalResult out;
  out.stage = RetrievalResult::Stage::retrieved;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& entry = entries[scored[i].entry];
    out.entry_ids.push_back(entry.id);
    std::vector<const TextSection*> secs;
    for (const auto& s : entry.sections) secs.push_back(&s);
    std::sort(secs.begin(), secs.end(),
              [](const TextSection* a, const TextSection* b) { return a->section_id < b->section_id; });
    for (const auto* s : secs) out.sections.push_back({*s, scored[i].score});
  }
  return out;
}

RetrievalResult retrieve(const KnowledgeBase& kb, const EmbeddingIndex& index, const Backend& backend,
                         const Image& query_image, int k1) {
  if (kb.empty()) throw ValidationError("cannot retrieve from an empty knowledge base");
  return retrieve(kb, index, backend.embed_image(query_image), k1);
}

RetrievalResult rerank(const Backend& backend, const Image& query_image, const std::string& question,
                       const RetrievalResult& retrieved, int k2, bool enabled) {
  if (k2 < 1) throw ValidationError("k2 must be >= 1");
  RetrievalResult out;
  out.stage = RetrievalResult::Stage::reranked;
  out.entry_ids = retrieved.entry_ids;
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(k2), retrieved.sections.size());
  if (!enabled) {
    out.sections.assign(retrieved.sections.begin(), retrieved.sections.begin() + static_cast<std::ptrdiff_t>(k));
    return out;
  }
  if (retrieved.sections.empty()) return out;
  const auto fused = backend.embed_fused(query_image, question);
  out.sections = retrieved.sections;
  for (auto& s : out.sections) s.score = dot(fused, backend.embed_text(s.section.text));
  std::partial_sort(out.sections.begin(), out.sections.begin() + static_cast<std::ptrdiff_t>(k), out.sections.end(),
                    section_before);
  out.sections.resize(k);
  return out;
}

std::string generate_answer(const AnswerGenerator& generator, const Image& query_image, const std::string& question,
                            const std::vector<std::string>& context) {
  return generator.generate(query_image, question, context);
}

AnswerResult answer_query(const KnowledgeBase& kb, const EmbeddingIndex& index, const Backend& backend,
                          const AnswerGenerator& generator, const PipelineConfig& config, const Image& query_image,
                          const std::string& question) {
  config.validate();
  AnswerResult r;
  r.retrieved = retrieve(kb, index, backend, query_image, config.k1);
  r.reranked = rerank(backend, query_image, question, r.retrieved, config.k2, config.reranker_enabled);
  std::vector<std::string> context;
  for (std::size_t i = 0; i < r.reranked.sections.size() && static_cast<int>(i) < config.context_consumed; ++i)
    context.push_back(r.reranked.sections[i].section.text);
  r.answer = generate_answer(generator, query_image, question, context);
  return r;
}

AnswerResult answer_query(const KnowledgeBase& kb, const EmbeddingIndex& index, const Backend& backend,
                          const AnswerGenerator& generator, const PipelineConfig& config, const QueryCase& query) {
  return answer_query(kb, index, backend, generator, config, query.query_image, query.question);
}

}  // namespace ragpoison
