#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ragpoison/embed.hpp"
#include "ragpoison/generator.hpp"
#include "ragpoison/kb.hpp"

namespace ragpoison {

struct AttackConfig {
  int N = 5;
  double epsilon = 0.05;
  double alpha = 0.005;
  int t = 40;
  int k_clusters = 3;
  int L = 10;
  int V = 50;
  double lambda = 0.1;
  double eta = 0.05;
  int sim_steps = 20;
  int rewrite_candidates = 8;
  bool best_iterate = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct KMeansResult {
  std::vector<EmbeddingVec> centers;  // raw means, not normalized
  std::vector<int> assignment;
  int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Stops after max_iter rounds or
/// when no center moves more than tol (Euclidean). An empty cluster is
/// re-seeded at the point farthest from its current center.
KMeansResult kmeans(const std::vector<EmbeddingVec>& points, int k, std::uint64_t seed, int max_iter = 100,
                    double tol = 1e-6);

struct TargetApproximation {
  std::vector<EmbeddingVec> centers;  // unit norm
  EmbeddingVec fused_target;          // E_Q
  std::vector<Image> reference_images;
};

TargetApproximation approximate_target(const Backend& backend, std::vector<Image> reference_images,
                                       const std::string& question, int k, std::uint64_t seed);

struct PgdResult {
  Image image;
  double initial_cos = 0.0;
  double final_cos = 0.0;  // cosine of the returned image
  double last_cos = 0.0;   // cosine of the last iterate
};

/// Sign-gradient ascent on cos(embed_image(x), center), projected onto the
/// L-inf ball of radius epsilon around base and onto [0, 1].
PgdResult craft_poison_image(const Backend& backend, const Image& base, const EmbeddingVec& center,
                             const AttackConfig& cfg);

std::string init_poison_text(const CorpusGenerator& generator, const Image& reference, const std::string& question,
                             const std::string& target_answer, int V, std::uint64_t seed);

struct SimilarityResult {
  EmbeddingVec target_embedding;
  std::string revised_text;
  std::vector<double> loss_trace;  // L_total at the start and after each step
  double input_cos = 0.0;          // cos(embed_text(input), E_Q)
  double revised_cos = 0.0;        // cos(embed_text(revised), E_Q)
};

/// Continuous phase: descent on -cos(E_Q, E) + lambda*|E - E0|^2 from
/// E0 = embed_text(text), backtracking the step until the loss does not
/// increase, renormalizing each step. Projection phase: among the input and
/// rewrite_candidates generator variants, keep the text whose embedding is
/// closest to the optimized target (ties keep the input).
SimilarityResult optimize_text_similarity(const Backend& backend, const CorpusGenerator& generator,
                                          const std::string& text, const std::string& question,
                                          const std::string& target_answer, const EmbeddingVec& fused_target,
                                          const AttackConfig& cfg, std::uint64_t seed);

struct TextCraftResult {
  std::string text;
  int rounds_used = 0;
  int generator_queries = 0;  // creation + rewrites
};

/// Checks the text as sole context; rewrites and re-optimizes until the
/// answer contains the target or L optimization rounds are used. `text` must
/// already be optimized once (that counts as round 1).
TextCraftResult aggressiveness_loop(const Backend& backend, const CorpusGenerator& generator,
                                    const AnswerGenerator& oracle, const Image& reference, const std::string& text,
                                    const QueryCase& query, const EmbeddingVec& fused_target, const AttackConfig& cfg,
                                    std::uint64_t seed);

/// Full text crafting: init, similarity, aggressiveness.
TextCraftResult craft_poison_text(const Backend& backend, const CorpusGenerator& generator,
                                  const AnswerGenerator& oracle, const Image& reference, const QueryCase& query,
                                  const EmbeddingVec& fused_target, const AttackConfig& cfg, std::uint64_t seed);

struct ManifestRecord {
  std::string entry_id;
  std::string query_id;
  std::string kind;
  int j = 0;
  std::string base_id;
  int center_index = -1;
  double initial_cos = 0.0;
  double final_cos = 0.0;
  double text_cos = 0.0;
  int rounds_used = 0;
  int generator_queries = 0;
  double image_seconds = 0.0;
  double text_seconds = 0.0;
};

struct CraftOutput {
  std::vector<KnowledgeEntry> entries;
  std::vector<ManifestRecord> manifest;
};

/// Inputs shared by Spa-VLM and the baselines.
struct CraftContext {
  const Backend& backend;
  const CorpusGenerator& generator;
  const AnswerGenerator& oracle;
  const KnowledgeBase& kb;
  /// Entry id -> class label. When empty, base images are taken from the
  /// half of the KB least similar to the references.
  const std::map<std::string, std::string>& entry_classes;
};

CraftOutput build_malicious_entries(const CraftContext& ctx, const QueryCase& query,
                                    const std::vector<Image>& reference_images, const AttackConfig& cfg);

enum class AttackKind { none, spa_vlm, naive, prompt_injection, corpus_poisoning, poisoned_rag };

AttackKind parse_attack_kind(const std::string& s);
const char* to_string(AttackKind kind);

CraftOutput build_baseline(AttackKind kind, const CraftContext& ctx, const QueryCase& query,
                           const std::vector<Image>& reference_images, const AttackConfig& cfg);

/// Dispatches to build_malicious_entries or build_baseline.
CraftOutput build_attack(AttackKind kind, const CraftContext& ctx, const QueryCase& query,
                         const std::vector<Image>& reference_images, const AttackConfig& cfg);

/// Seeded text of exactly V words matching [a-z0-9 ]+.
std::string random_corpus_text(int V, std::uint64_t seed);

}  // namespace ragpoison
