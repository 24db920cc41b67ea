#pragma once

#include <string>
#include <vector>

#include "ragpoison/embed.hpp"
#include "ragpoison/generator.hpp"
#include "ragpoison/index.hpp"
#include "ragpoison/kb.hpp"

namespace ragpoison {

struct PipelineConfig {
  int k1 = 5;
  int k2 = 5;
  bool reranker_enabled = true;
  int context_consumed = 1;

  void validate() const;
};

struct ScoredSection {
  TextSection section;
  double score = 0.0;
};

struct RetrievalResult {
  enum class Stage { retrieved, reranked };
  Stage stage = Stage::retrieved;
  std::vector<ScoredSection> sections;
  std::vector<std::string> entry_ids;  // retrieved entries in rank order
};

/// Top-k1 entries by max-over-images cosine, all their sections. Order: score
/// descending, then entry id, then section id.
RetrievalResult retrieve(const KnowledgeBase& kb, const EmbeddingIndex& index, const EmbeddingVec& query_embedding,
                         int k1);
RetrievalResult retrieve(const KnowledgeBase& kb, const EmbeddingIndex& index, const Backend& backend,
                         const Image& query_image, int k1);

/// Scores sections by cos(embed_fused(image, question), embed_text(text)) and
/// keeps the top k2 with the same tie-break. Disabled: input prefix.
RetrievalResult rerank(const Backend& backend, const Image& query_image, const std::string& question,
                       const RetrievalResult& retrieved, int k2, bool enabled = true);

std::string generate_answer(const AnswerGenerator& generator, const Image& query_image, const std::string& question,
                            const std::vector<std::string>& context);

struct AnswerResult {
  std::string answer;
  RetrievalResult retrieved;
  RetrievalResult reranked;
};

AnswerResult answer_query(const KnowledgeBase& kb, const EmbeddingIndex& index, const Backend& backend,
                          const AnswerGenerator& generator, const PipelineConfig& config, const Image& query_image,
                          const std::string& question);
AnswerResult answer_query(const KnowledgeBase& kb, const EmbeddingIndex& index, const Backend& backend,
                          const AnswerGenerator& generator, const PipelineConfig& config, const QueryCase& query);

}  // namespace ragpoison
