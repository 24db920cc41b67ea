#include <gtest/gtest.h>

#include <map>
#include <regex>
#include <set>

#include "ragpoison/attack.hpp"
#include "ragpoison/error.hpp"
#include "ragpoison/index.hpp"
#include "ragpoison/pipeline.hpp"
#include "ragpoison/synth.hpp"
#include "ragpoison/text.hpp"
#include "test_util.hpp"

using namespace ragpoison;

namespace {

const ToyBackend& backend() {
  static const ToyBackend b{BackendDescriptor{}};
  return b;
}

// Never mentions the answer, so the aggressiveness loop cannot succeed.
class SilentGenerator final : public CorpusGenerator {
 public:
  mutable int creates = 0;
  mutable int rewrites = 0;
  std::string create(const Image&, const std::string&, const std::string&, int, std::uint64_t seed) const override {
    ++creates;
    return filler_text(12, seed);
  }
  std::string rewrite(const Image&, const std::string&, const std::string&, const std::string&, int,
                      std::uint64_t seed) const override {
    ++rewrites;
    return filler_text(12, seed + 1);
  }
  std::vector<std::string> variants(const std::string&, const std::string&, const std::string&, int, int,
                                    std::uint64_t) const override {
    return {};
  }
};

struct Fixture {
  SynthResult synth = synth_kb(120, 4, 2, 31);
  StubCorpusGenerator corpus;
  std::vector<std::string> vocab;
  std::unique_ptr<StubAnswerGenerator> oracle;
  ClassSampler sampler{synth.params};

  Fixture() {
    for (const auto& q : synth.queries) {
      vocab.push_back(q.gold_answer);
      vocab.push_back(q.target_answer);
    }
    oracle = std::make_unique<StubAnswerGenerator>(vocab);
  }

  std::vector<Image> references(const QueryCase& q, int n, std::uint64_t seed) const {
    Rng rng(seed);
    std::vector<Image> out;
    for (int i = 0; i < n; ++i) out.push_back(sampler.sample(synth_class_index(q.class_label), rng));
    return out;
  }

  CraftContext ctx() const { return {backend(), corpus, *oracle, synth.kb, synth.entry_classes}; }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST(KMeans, SeparatesWellSeparatedClusters) {
  Rng rng(1);
  std::vector<EmbeddingVec> pts;
  const std::vector<EmbeddingVec> truth = {{0, 0}, {10, 0}, {0, 10}};
  for (int i = 0; i < 90; ++i) {
    const auto& c = truth[i % 3];
    pts.push_back({c[0] + 0.1 * rng.normal(), c[1] + 0.1 * rng.normal()});
  }
  const auto r = kmeans(pts, 3, 7);
  ASSERT_EQ(r.centers.size(), 3u);
  for (int i = 0; i < 90; ++i) EXPECT_EQ(r.assignment[i], r.assignment[i % 3]);
  std::set<int> labels(r.assignment.begin(), r.assignment.end());
  EXPECT_EQ(labels.size(), 3u);
  for (const auto& c : r.centers) {
    double best = 1e9;
    for (const auto& t : truth) best = std::min(best, std::hypot(c[0] - t[0], c[1] - t[1]));
    EXPECT_LT(best, 0.1);
  }
  EXPECT_EQ(kmeans(pts, 3, 7).centers, r.centers);
}

TEST(KMeans, SinglePointAndPreconditions) {
  const auto r = kmeans({{1.0, 2.0}}, 1, 0);
  EXPECT_EQ(r.centers[0], (EmbeddingVec{1.0, 2.0}));
  EXPECT_THROW(kmeans({{1.0}}, 2, 0), ValidationError);
  EXPECT_THROW(kmeans({{1.0}}, 0, 0), ValidationError);
  // Duplicate points: k-means++ falls back and still returns k centers.
  const auto d = kmeans({{1.0}, {1.0}, {1.0}}, 2, 0);
  EXPECT_EQ(d.centers.size(), 2u);
}

TEST(ApproximateTarget, OneClusterIsTheNormalizedMean) {
  Rng rng(2);
  std::vector<Image> refs;
  for (int i = 0; i < 6; ++i) refs.push_back(ragpoison::testing::smooth_image(rng, 16, 16));
  const auto a = approximate_target(backend(), refs, "what is this", 1, 0);
  EmbeddingVec mean(128, 0.0), fused(128, 0.0);
  for (const auto& r : refs) {
    const auto e = backend().embed_image(r);
    const auto f = backend().embed_fused(r, "what is this");
    for (int i = 0; i < 128; ++i) mean[i] += e[i], fused[i] += f[i];
  }
  EXPECT_NEAR(dot(a.centers[0], normalized_or_e1(mean)), 1.0, 1e-12);
  EXPECT_NEAR(dot(a.fused_target, normalized_or_e1(fused)), 1.0, 1e-12);
  EXPECT_THROW(approximate_target(backend(), refs, "q", 7, 0), ValidationError);
}

TEST(ApproximateTarget, TwoClassesGiveTwoCenters) {
  const auto& f = fixture();
  std::vector<Image> refs;
  Rng rng(3);
  for (int i = 0; i < 20; ++i) refs.push_back(f.sampler.sample(i % 2, rng));
  const auto a = approximate_target(backend(), refs, "q", 2, 5);
  Rng rng2(4);
  const auto c0 = backend().embed_image(f.sampler.sample(0, rng2));
  const auto c1 = backend().embed_image(f.sampler.sample(1, rng2));
  const bool direct = dot(a.centers[0], c0) > dot(a.centers[0], c1);
  EXPECT_GT(dot(a.centers[direct ? 0 : 1], c0), 0.97);
  EXPECT_GT(dot(a.centers[direct ? 1 : 0], c1), 0.97);
}

TEST(Pgd, ZeroBudgetOrZeroStepsReturnsBase) {
  Rng rng(5);
  const auto base = ragpoison::testing::smooth_image(rng, 32, 32);
  const auto center = backend().embed_image(ragpoison::testing::smooth_image(rng, 32, 32));
  AttackConfig cfg;
  cfg.epsilon = 0.0;
  auto r = craft_poison_image(backend(), base, center, cfg);
  EXPECT_EQ(r.image, base);
  cfg = {};
  cfg.t = 0;
  r = craft_poison_image(backend(), base, center, cfg);
  EXPECT_EQ(r.image, base);
  EXPECT_DOUBLE_EQ(r.final_cos, r.initial_cos);
}

TEST(Pgd, StaysInBudgetAndNeverRegresses) {
  Rng rng(6);
  for (int trial = 0; trial < 8; ++trial) {
    const auto base = ragpoison::testing::random_image(rng, 32, 32);
    const auto center = backend().embed_image(ragpoison::testing::smooth_image(rng, 32, 32));
    AttackConfig cfg;
    cfg.epsilon = rng.uniform(0.01, 0.1);
    cfg.t = 1 + static_cast<int>(rng.below(30));
    const auto r = craft_poison_image(backend(), base, center, cfg);
    EXPECT_LE(r.image.max_abs_diff(base), cfg.epsilon);
    EXPECT_TRUE(r.image.in_unit_range());
    EXPECT_GE(r.final_cos, r.initial_cos);
    EXPECT_GE(r.final_cos, r.last_cos);
    EXPECT_NEAR(dot(backend().embed_image(r.image), center), r.final_cos, 1e-12);
  }
}

TEST(Pgd, DefaultBudgetMovesTowardClassCenter) {
  const auto& f = fixture();
  const auto& q = f.synth.queries[0];
  const auto a = approximate_target(backend(), f.references(q, 50, 1), q.question, 1, 0);
  const KnowledgeEntry* other = nullptr;
  for (const auto& e : f.synth.kb.entries())
    if (f.synth.entry_classes.at(e.id) != q.class_label) {
      other = &e;
      break;
    }
  const auto r = craft_poison_image(backend(), *other->images[0], a.centers[0], AttackConfig{});
  EXPECT_GT(r.final_cos - r.initial_cos, 0.02);
}

TEST(TextCraft, StubInitContainsAnswerAndRespectsV) {
  const StubCorpusGenerator g;
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    const int V = 5 + static_cast<int>(rng.below(60));
    const std::string answer = "Zorbel " + ragpoison::testing::random_word(rng);
    const auto t = init_poison_text(g, Image(8, 8), "who made this statue?", answer, V, rng.next_u64());
    EXPECT_TRUE(contains_answer(t, answer)) << t;
    EXPECT_LE(word_count(t), static_cast<std::size_t>(V));
  }
  EXPECT_THROW(init_poison_text(g, Image(8, 8), "q", "a", 0, 1), ValidationError);
}

TEST(TextCraft, HugeLambdaKeepsInitialEmbedding) {
  const StubCorpusGenerator g;
  const std::string text = init_poison_text(g, Image(8, 8), "who built this bridge?", "Quorlan", 50, 3);
  Rng rng(1);
  const auto fused = backend().embed_fused(ragpoison::testing::smooth_image(rng), "who built this bridge?");
  AttackConfig cfg;
  cfg.lambda = 1e6;
  const auto r = optimize_text_similarity(backend(), g, text, "who built this bridge?", "Quorlan", fused, cfg, 1);
  EXPECT_GT(dot(r.target_embedding, backend().embed_text(text)), 1 - 1e-6);
}

TEST(TextCraft, ZeroLambdaMovesTowardTargetAndLossNeverRises) {
  const StubCorpusGenerator g;
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const std::string q = ragpoison::testing::random_sentence(rng, 6) + "?";
    const std::string text = init_poison_text(g, Image(8, 8), q, "Plindor", 40, rng.next_u64());
    const auto fused = backend().embed_fused(ragpoison::testing::smooth_image(rng, 16, 16), q);
    AttackConfig cfg;
    cfg.lambda = trial % 2 == 0 ? 0.0 : rng.uniform(0.0, 2.0);
    const auto r = optimize_text_similarity(backend(), g, text, q, "Plindor", fused, cfg, rng.next_u64());
    for (std::size_t i = 1; i < r.loss_trace.size(); ++i) EXPECT_LE(r.loss_trace[i], r.loss_trace[i - 1] + 1e-15);
    if (cfg.lambda == 0.0) EXPECT_GE(dot(r.target_embedding, fused), dot(backend().embed_text(text), fused));
    // Projection never loses similarity to the fused query.
    EXPECT_GE(r.revised_cos, r.input_cos);
    EXPECT_NEAR(r.revised_cos, dot(backend().embed_text(r.revised_text), fused), 1e-12);
  }
}

TEST(TextCraft, LoopExhaustsBudgetWhenAnswerNeverAppears) {
  const SilentGenerator g;
  const StubAnswerGenerator oracle({"Plindor"});
  QueryCase q;
  q.id = "q";
  q.question = "who built this";
  q.target_answer = "Plindor";
  AttackConfig cfg;
  cfg.L = 4;
  const auto fused = backend().embed_text("who built this");
  const auto r = craft_poison_text(backend(), g, oracle, Image(8, 8, 0.5), q, fused, cfg, 11);
  EXPECT_EQ(r.rounds_used, 4);
  EXPECT_EQ(r.generator_queries, 4);
  EXPECT_EQ(g.creates, 1);
  EXPECT_EQ(g.rewrites, 3);
  EXPECT_FALSE(contains_answer(r.text, "Plindor"));
}

TEST(TextCraft, StubSucceedsInOneRound) {
  const auto& f = fixture();
  const auto& q = f.synth.queries[1];
  const auto fused = backend().embed_fused(q.query_image, q.question);
  const auto r = craft_poison_text(backend(), f.corpus, *f.oracle, q.query_image, q, fused, AttackConfig{}, 4);
  EXPECT_EQ(r.rounds_used, 1);
  EXPECT_EQ(r.generator_queries, 1);
  EXPECT_TRUE(contains_answer(r.text, q.target_answer));
}

TEST(Spa, EntryCountsAndCenterAssignment) {
  const auto& f = fixture();
  const auto& q = f.synth.queries[0];
  AttackConfig cfg;
  cfg.N = 7;
  cfg.k_clusters = 3;
  cfg.t = 5;
  cfg.seed = 12;
  const auto out = build_malicious_entries(f.ctx(), q, f.references(q, 30, 2), cfg);
  ASSERT_EQ(out.entries.size(), 7u);
  std::map<int, int> per_center;
  std::set<std::string> ids;
  for (std::size_t j = 0; j < out.entries.size(); ++j) {
    const auto& e = out.entries[j];
    const auto& m = out.manifest[j];
    ++per_center[m.center_index];
    ids.insert(e.id);
    EXPECT_EQ(f.synth.kb.find(e.id), nullptr);
    ASSERT_EQ(e.images.size(), 1u);
    ASSERT_EQ(e.sections.size(), 1u);
    EXPECT_TRUE(contains_answer(e.sections[0].text, q.target_answer));
    const auto* base = f.synth.kb.find(m.base_id);
    ASSERT_NE(base, nullptr);
    EXPECT_NE(f.synth.entry_classes.at(base->id), q.class_label);
    EXPECT_LE(e.images[0]->max_abs_diff(*base->images[0]), cfg.epsilon);
    EXPECT_EQ(e.title, base->title);
  }
  EXPECT_EQ(ids.size(), 7u);
  EXPECT_EQ(per_center, (std::map<int, int>{{0, 3}, {1, 2}, {2, 2}}));
}

TEST(Spa, DeterministicForFixedSeed) {
  const auto& f = fixture();
  const auto& q = f.synth.queries[2];
  AttackConfig cfg;
  cfg.N = 2;
  cfg.t = 5;
  cfg.seed = 99;
  const auto refs = f.references(q, 20, 3);
  const auto a = build_malicious_entries(f.ctx(), q, refs, cfg);
  const auto b = build_malicious_entries(f.ctx(), q, refs, cfg);
  ASSERT_EQ(a.entries.size(), b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) EXPECT_TRUE(same_content(a.entries[i], b.entries[i]));
  cfg.seed = 100;
  const auto c = build_malicious_entries(f.ctx(), q, refs, cfg);
  EXPECT_NE(a.entries[0].id, c.entries[0].id);
  cfg.N = 0;
  EXPECT_TRUE(build_malicious_entries(f.ctx(), q, refs, cfg).entries.empty());
  cfg.N = 1;
  EXPECT_THROW(build_malicious_entries(f.ctx(), q, {}, cfg), ValidationError);
}

TEST(Baselines, NaiveSplitsImageAndTextHalves) {
  const auto& f = fixture();
  const auto& q = f.synth.queries[0];
  AttackConfig cfg;
  cfg.t = 5;
  const auto out = build_baseline(AttackKind::naive, f.ctx(), q, f.references(q, 20, 4), cfg);
  ASSERT_EQ(out.entries.size(), 10u);
  int with_answer = 0;
  for (const auto& e : out.entries) with_answer += contains_answer(e.sections[0].text, q.target_answer);
  EXPECT_EQ(with_answer, 5);
  for (std::size_t j = 0; j < out.entries.size(); j += 2) {
    EXPECT_FALSE(contains_answer(out.entries[j].sections[0].text, q.target_answer));
    EXPECT_TRUE(contains_answer(out.entries[j + 1].sections[0].text, q.target_answer));
    // The text half carries an untouched clean image.
    const auto* base = f.synth.kb.find(out.manifest[j + 1].base_id);
    ASSERT_NE(base, nullptr);
    EXPECT_EQ(*out.entries[j + 1].images[0], *base->images[0]);
  }
}

TEST(Baselines, CorpusPoisoningTextFormat) {
  const auto& f = fixture();
  const auto& q = f.synth.queries[0];
  AttackConfig cfg;
  cfg.V = 30;
  const auto out = build_baseline(AttackKind::corpus_poisoning, f.ctx(), q, f.references(q, 5, 5), cfg);
  ASSERT_EQ(out.entries.size(), 5u);
  const std::regex re("[a-z0-9 ]+");
  for (const auto& e : out.entries) {
    EXPECT_TRUE(std::regex_match(e.sections[0].text, re));
    EXPECT_EQ(word_count(e.sections[0].text), 30u);
  }
  EXPECT_EQ(random_corpus_text(12, 4), random_corpus_text(12, 4));
  EXPECT_EQ(word_count(random_corpus_text(12, 4)), 12u);
}

TEST(Baselines, PromptInjectionAndPoisonedRagTexts) {
  const auto& f = fixture();
  const auto& q = f.synth.queries[0];
  const auto refs = f.references(q, 10, 6);
  AttackConfig cfg;
  const auto pi = build_baseline(AttackKind::prompt_injection, f.ctx(), q, refs, cfg);
  for (const auto& e : pi.entries) {
    EXPECT_EQ(e.sections[0].text, injection_text(q.question, q.target_answer));
    EXPECT_TRUE(e.images[0]->in_unit_range());
  }
  const auto pr = build_baseline(AttackKind::poisoned_rag, f.ctx(), q, refs, cfg);
  for (const auto& e : pr.entries) EXPECT_TRUE(contains_answer(e.sections[0].text, q.target_answer));
  EXPECT_TRUE(build_baseline(AttackKind::none, f.ctx(), q, refs, cfg).entries.empty());
}

TEST(Baselines, PoisonedRagIsNotRetrievedVisually) {
  const auto& f = fixture();
  AttackConfig cfg;
  cfg.seed = 3;
  std::vector<KnowledgeEntry> all;
  for (const auto& q : f.synth.queries) {
    auto out = build_baseline(AttackKind::poisoned_rag, f.ctx(), q, f.references(q, 10, 7), cfg);
    for (auto& e : out.entries) all.push_back(std::move(e));
  }
  const auto kb = inject_entries(f.synth.kb, all);
  const auto idx = EmbeddingIndex::build(backend(), kb);
  int clean = 0;
  for (const auto& q : f.synth.queries) {
    const auto r = retrieve(kb, idx, backend(), q.query_image, 5);
    bool any = false;
    for (const auto& id : r.entry_ids) any = any || kb.find(id)->is_malicious;
    clean += !any;
  }
  EXPECT_EQ(clean, static_cast<int>(f.synth.queries.size()));
}

TEST(AttackKinds, ParseAndPrint) {
  for (auto k : {AttackKind::none, AttackKind::spa_vlm, AttackKind::naive, AttackKind::prompt_injection,
                 AttackKind::corpus_poisoning, AttackKind::poisoned_rag})
    EXPECT_EQ(parse_attack_kind(to_string(k)), k);
  EXPECT_THROW(parse_attack_kind("evil"), ValidationError);
  AttackConfig cfg;
  cfg.epsilon = -1;
  EXPECT_THROW(cfg.validate(), ValidationError);
}
