#include "ragpoison/attack.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>

#include "ragpoison/error.hpp"
#include "ragpoison/rng.hpp"
#include "ragpoison/synth.hpp"
#include "ragpoison/text.hpp"

namespace ragpoison {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double sq_dist(const EmbeddingVec& a, const EmbeddingVec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

int nearest(const EmbeddingVec& p, const std::vector<EmbeddingVec>& centers) {
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const double d = sq_dist(p, centers[c]);
    if (d < bd) {
      bd = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace

void AttackConfig::validate() const {
  if (N < 0) throw ValidationError("N must be >= 0");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValidationError("epsilon must be in [0,1]");
  if (!(alpha > 0.0)) throw ValidationError("alpha must be > 0");
  if (t < 0) throw ValidationError("t must be >= 0");
  if (k_clusters < 1) throw ValidationError("k_clusters must be >= 1");
  if (L < 1) throw ValidationError("L must be >= 1");
  if (V < 1) throw ValidationError("V must be >= 1");
  if (!(lambda >= 0.0)) throw ValidationError("lambda must be >= 0");
  if (!(eta > 0.0)) throw ValidationError("eta must be > 0");
  if (sim_steps < 0) throw ValidationError("sim_steps must be >= 0");
  if (rewrite_candidates < 0) throw ValidationError("rewrite_candidates must be >= 0");
}

KMeansResult kmeans(const std::vector<EmbeddingVec>& points, int k, std::uint64_t seed, int max_iter, double tol) {
  if (k < 1) throw ValidationError("k must be >= 1");
  if (points.size() < static_cast<std::size_t>(k))
    throw ValidationError("k-means needs at least k points (have " + std::to_string(points.size()) + ", k=" +
                          std::to_string(k) + ")");
  Rng rng(seed);
  const std::size_t n = points.size();
  KMeansResult r;
  r.centers.push_back(points[rng.below(n)]);
  std::vector<double> d2(n);
  while (r.centers.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : r.centers) best = std::min(best, sq_dist(points[i], c));
      d2[i] = best;
      total += best;
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (u < d2[i]) {
          pick = i;
          break;
        }
        u -= d2[i];
      }
    } else {
      pick = rng.below(n);
    }
    r.centers.push_back(points[pick]);
  }

  const std::size_t dim = points[0].size();
  r.assignment.assign(n, 0);
  for (int it = 0; it < max_iter; ++it) {
    r.iterations = it + 1;
    for (std::size_t i = 0; i < n; ++i) r.assignment[i] = nearest(points[i], r.centers);
    std::vector<EmbeddingVec> next(k, EmbeddingVec(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[r.assignment[i]];
      for (std::size_t d = 0; d < dim; ++d) next[r.assignment[i]][d] += points[i][d];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Re-seed at the point worst served by its current center.
        std::size_t far = 0;
        double fd = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = sq_dist(points[i], r.centers[r.assignment[i]]);
          if (d > fd) {
            fd = d;
            far = i;
          }
        }
        next[c] = points[far];
        continue;
      }
      for (double& v : next[c]) v /= static_cast<double>(counts[c]);
    }
    double moved = 0.0;
    for (int c = 0; c < k; ++c) moved = std::max(moved, std::sqrt(sq_dist(next[c], r.centers[c])));
    r.centers = std::move(next);
    if (moved < tol) break;
  }
  for (std::size_t i = 0; i < n; ++i) r.assignment[i] = nearest(points[i], r.centers);
  return r;
}

TargetApproximation approximate_target(const Backend& backend, std::vector<Image> reference_images,
                                       const std::string& question, int k, std::uint64_t seed) {
  if (k < 1) throw ValidationError("k must be >= 1");
  if (reference_images.size() < static_cast<std::size_t>(k))
    throw ValidationError("need at least k reference images (have " + std::to_string(reference_images.size()) +
                          ", k=" + std::to_string(k) + ")");
  std::vector<EmbeddingVec> embs;
  EmbeddingVec fused(backend.dim(), 0.0);
  for (const auto& img : reference_images) {
    embs.push_back(backend.embed_image(img));
    const auto f = backend.embed_fused(img, question);
    for (int i = 0; i < backend.dim(); ++i) fused[i] += f[i];
  }
  TargetApproximation out;
  for (auto& c : kmeans(embs, k, seed).centers) out.centers.push_back(normalized_or_e1(std::move(c)));
  out.fused_target = normalized_or_e1(std::move(fused));
  out.reference_images = std::move(reference_images);
  return out;
}

PgdResult craft_poison_image(const Backend& backend, const Image& base, const EmbeddingVec& center,
                             const AttackConfig& cfg) {
  cfg.validate();
  PgdResult r;
  Image x = base;
  r.initial_cos = dot(backend.embed_image(x), center);
  Image best = x;
  double best_cos = r.initial_cos;
  double cur = r.initial_cos;
  const auto b = base.pixels();
  for (int step = 0; step < cfg.t; ++step) {
    const Image g = backend.image_cos_grad(x, center);
    auto px = x.pixels();
    const auto gp = g.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) {
      const double s = gp[i] > 0.0 ? 1.0 : (gp[i] < 0.0 ? -1.0 : 0.0);
      double v = px[i] + cfg.alpha * s;
      v = std::clamp(v, b[i] - cfg.epsilon, b[i] + cfg.epsilon);
      // b +- eps rounds, so |v - b| can exceed eps by an ulp.
      while (std::abs(v - b[i]) > cfg.epsilon) v = std::nextafter(v, b[i]);
      px[i] = std::clamp(v, 0.0, 1.0);
    }
    cur = dot(backend.embed_image(x), center);
    if (cur > best_cos) {
      best_cos = cur;
      best = x;
    }
  }
  r.last_cos = cur;
  if (cfg.best_iterate) {
    r.image = std::move(best);
    r.final_cos = best_cos;
  } else {
    r.image = std::move(x);
    r.final_cos = cur;
  }
  return r;
}

std::string init_poison_text(const CorpusGenerator& generator, const Image& reference, const std::string& question,
                             const std::string& target_answer, int V, std::uint64_t seed) {
  if (V < 1) throw ValidationError("V must be >= 1");
  return generator.create(reference, question, target_answer, V, seed);
}

SimilarityResult optimize_text_similarity(const Backend& backend, const CorpusGenerator& generator,
                                          const std::string& text, const std::string& question,
                                          const std::string& target_answer, const EmbeddingVec& fused_target,
                                          const AttackConfig& cfg, std::uint64_t seed) {
  if (text.empty()) throw ValidationError("cannot optimize an empty text");
  const EmbeddingVec& q = fused_target;
  const EmbeddingVec e0 = backend.embed_text(text);
  auto loss = [&](const EmbeddingVec& e) { return -dot(q, e) + cfg.lambda * sq_dist(e, e0); };

  SimilarityResult r;
  EmbeddingVec e = e0;
  double cur = loss(e);
  r.loss_trace.push_back(cur);
  const std::size_t d = e.size();
  for (int step = 0; step < cfg.sim_steps; ++step) {
    const double eq = dot(e, q);
    EmbeddingVec g(d);
    double gn = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      g[i] = -(q[i] - eq * e[i]) + 2.0 * cfg.lambda * (e[i] - e0[i]);
      gn += g[i] * g[i];
    }
    if (gn < 1e-24) break;
    double eta = cfg.eta;
    bool accepted = false;
    for (int halving = 0; halving < 60 && !accepted; ++halving, eta *= 0.5) {
      EmbeddingVec cand(d);
      for (std::size_t i = 0; i < d; ++i) cand[i] = e[i] - eta * g[i];
      cand = normalized_or_e1(std::move(cand));
      const double l = loss(cand);
      if (l <= cur) {
        e = std::move(cand);
        cur = l;
        accepted = true;
      }
    }
    if (!accepted) break;
    r.loss_trace.push_back(cur);
  }
  r.target_embedding = e;

  // Projection onto texts: candidates may not lose similarity to E_Q.
  r.input_cos = dot(e0, q);
  r.revised_text = text;
  r.revised_cos = r.input_cos;
  double best = dot(e0, e);
  for (const auto& cand : generator.variants(text, question, target_answer, cfg.V, cfg.rewrite_candidates, seed)) {
    if (cand.empty()) continue;
    const auto ce = backend.embed_text(cand);
    const double to_q = dot(ce, q);
    const double to_target = dot(ce, e);
    if (to_q >= r.input_cos && to_target > best) {
      best = to_target;
      r.revised_text = cand;
      r.revised_cos = to_q;
    }
  }
  return r;
}

TextCraftResult aggressiveness_loop(const Backend& backend, const CorpusGenerator& generator,
                                    const AnswerGenerator& oracle, const Image& reference, const std::string& text,
                                    const QueryCase& query, const EmbeddingVec& fused_target, const AttackConfig& cfg,
                                    std::uint64_t seed) {
  cfg.validate();
  TextCraftResult r;
  r.text = text;
  r.rounds_used = 1;
  for (;;) {
    const std::string answer = oracle.generate(reference, query.question, {r.text});
    if (contains_answer(answer, query.target_answer)) return r;
    if (r.rounds_used >= cfg.L) return r;
    const std::string round = std::to_string(r.rounds_used);
    std::string rewritten = generator.rewrite(reference, query.question, query.target_answer, r.text, cfg.V,
                                              derive_seed(seed, {"rewrite", round}));
    ++r.generator_queries;
    if (rewritten.empty()) throw RuntimeError("generator returned an empty rewrite for query " + query.id);
    r.text = optimize_text_similarity(backend, generator, rewritten, query.question, query.target_answer,
                                      fused_target, cfg, derive_seed(seed, {"similarity", round}))
                 .revised_text;
    ++r.rounds_used;
  }
}

TextCraftResult craft_poison_text(const Backend& backend, const CorpusGenerator& generator,
                                  const AnswerGenerator& oracle, const Image& reference, const QueryCase& query,
                                  const EmbeddingVec& fused_target, const AttackConfig& cfg, std::uint64_t seed) {
  std::string text =
      init_poison_text(generator, reference, query.question, query.target_answer, cfg.V, derive_seed(seed, {"init"}));
  if (text.empty()) throw RuntimeError("generator returned an empty corpus for query " + query.id);
  text = optimize_text_similarity(backend, generator, text, query.question, query.target_answer, fused_target, cfg,
                                  derive_seed(seed, {"similarity", "0"}))
             .revised_text;
  auto r = aggressiveness_loop(backend, generator, oracle, reference, text, query, fused_target, cfg, seed);
  r.generator_queries += 1;
  return r;
}

AttackKind parse_attack_kind(const std::string& s) {
  if (s == "none") return AttackKind::none;
  if (s == "spa-vlm" || s == "spa_vlm") return AttackKind::spa_vlm;
  if (s == "naive") return AttackKind::naive;
  if (s == "prompt-injection" || s == "prompt_injection") return AttackKind::prompt_injection;
  if (s == "corpus-poisoning" || s == "corpus_poisoning") return AttackKind::corpus_poisoning;
  if (s == "poisoned-rag" || s == "poisoned_rag") return AttackKind::poisoned_rag;
  throw ValidationError("unknown attack kind '" + s +
                        "' (expected none, spa-vlm, naive, prompt-injection, corpus-poisoning, poisoned-rag)");
}

const char* to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::none: return "none";
    case AttackKind::spa_vlm: return "spa-vlm";
    case AttackKind::naive: return "naive";
    case AttackKind::prompt_injection: return "prompt-injection";
    case AttackKind::corpus_poisoning: return "corpus-poisoning";
    case AttackKind::poisoned_rag: return "poisoned-rag";
  }
  return "?";
}

std::string random_corpus_text(int V, std::uint64_t seed) {
  static constexpr char kAlphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789";
  Rng rng(seed);
  std::string out;
  for (int w = 0; w < V; ++w) {
    if (w > 0) out += ' ';
    const auto len = 3 + rng.below(6);
    for (std::uint64_t i = 0; i < len; ++i) out += kAlphabet[rng.below(sizeof kAlphabet - 1)];
  }
  return out;
}

namespace {

/// Entries eligible as base images for a query.
std::vector<const KnowledgeEntry*> base_pool(const CraftContext& ctx, const QueryCase& query,
                                             const std::vector<Image>& refs) {
  std::vector<const KnowledgeEntry*> pool;
  if (!ctx.entry_classes.empty()) {
    for (const auto& e : ctx.kb.entries()) {
      if (e.is_malicious) continue;
      auto it = ctx.entry_classes.find(e.id);
      if (it != ctx.entry_classes.end() && it->second != query.class_label) pool.push_back(&e);
    }
  } else {
    // No labels: the half of the KB least similar to the reference mean.
    EmbeddingVec mean(ctx.backend.dim(), 0.0);
    for (const auto& img : refs) {
      const auto v = ctx.backend.embed_image(img);
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v[i];
    }
    std::vector<std::pair<double, const KnowledgeEntry*>> scored;
    for (const auto& e : ctx.kb.entries())
      if (!e.is_malicious) scored.emplace_back(dot(ctx.backend.embed_image(*e.images.front()), mean), &e);
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 0; i < (scored.size() + 1) / 2; ++i) pool.push_back(scored[i].second);
  }
  if (pool.empty()) throw ValidationError("no base images available outside class " + query.class_label);
  return pool;
}

std::string fresh_id(Rng& rng, const KnowledgeBase& kb, std::set<std::string>& used) {
  for (;;) {
    std::string id = random_entry_id(rng);
    if (kb.find(id) == nullptr && used.insert(id).second) return id;
  }
}

KnowledgeEntry make_entry(std::string id, std::string title, Image image, std::string text) {
  KnowledgeEntry e;
  e.id = std::move(id);
  e.title = std::move(title);
  e.images.push_back(std::make_shared<Image>(std::move(image)));
  e.sections.push_back({e.id, "s00", std::move(text), false});
  e.is_malicious = true;
  e.sections.back().is_malicious = true;
  return e;
}

}  // namespace

CraftOutput build_malicious_entries(const CraftContext& ctx, const QueryCase& query,
                                    const std::vector<Image>& reference_images, const AttackConfig& cfg) {
  cfg.validate();
  CraftOutput out;
  if (cfg.N == 0) return out;
  if (reference_images.empty()) throw ValidationError("query " + query.id + " has no reference images");
  const auto approx = approximate_target(ctx.backend, reference_images, query.question, cfg.k_clusters,
                                         derive_seed(cfg.seed, {"kmeans", query.id}));
  const auto pool = base_pool(ctx, query, reference_images);
  std::set<std::string> used;
  for (int j = 0; j < cfg.N; ++j) {
    const std::string js = std::to_string(j);
    Rng rng(derive_seed(cfg.seed, {"poison", query.id, js}));
    const KnowledgeEntry& base = *pool[rng.below(pool.size())];
    ManifestRecord m;
    m.entry_id = fresh_id(rng, ctx.kb, used);
    m.query_id = query.id;
    m.kind = "spa-vlm";
    m.j = j;
    m.base_id = base.id;
    m.center_index = j % static_cast<int>(approx.centers.size());

    auto t0 = Clock::now();
    auto pgd = craft_poison_image(ctx.backend, *base.images.front(), approx.centers[m.center_index], cfg);
    m.image_seconds = seconds_since(t0);
    m.initial_cos = pgd.initial_cos;
    m.final_cos = pgd.final_cos;

    t0 = Clock::now();
    const Image& reference = reference_images[j % reference_images.size()];
    auto text = craft_poison_text(ctx.backend, ctx.generator, ctx.oracle, reference, query, approx.fused_target, cfg,
                                  derive_seed(cfg.seed, {"text", query.id, js}));
    m.text_seconds = seconds_since(t0);
    m.rounds_used = text.rounds_used;
    m.generator_queries = text.generator_queries;
    m.text_cos = dot(ctx.backend.embed_text(text.text), approx.fused_target);

    out.entries.push_back(make_entry(m.entry_id, base.title, std::move(pgd.image), std::move(text.text)));
    out.manifest.push_back(std::move(m));
  }
  return out;
}

CraftOutput build_baseline(AttackKind kind, const CraftContext& ctx, const QueryCase& query,
                           const std::vector<Image>& reference_images, const AttackConfig& cfg) {
  cfg.validate();
  CraftOutput out;
  if (cfg.N == 0 || kind == AttackKind::none) return out;
  if (kind == AttackKind::spa_vlm) return build_malicious_entries(ctx, query, reference_images, cfg);

  const auto pool = base_pool(ctx, query, reference_images);
  std::set<std::string> used;
  const char* kname = to_string(kind);

  if (kind == AttackKind::naive) {
    // Same crafted halves as Spa-VLM, but never in the same entry.
    auto spa = build_malicious_entries(ctx, query, reference_images, cfg);
    for (std::size_t j = 0; j < spa.entries.size(); ++j) {
      const std::string js = std::to_string(j);
      Rng rng(derive_seed(cfg.seed, {"naive", query.id, js}));
      const auto& src = spa.entries[j];
      const auto& src_m = spa.manifest[j];

      ManifestRecord img_m = src_m;
      img_m.kind = kname;
      img_m.entry_id = fresh_id(rng, ctx.kb, used);
      img_m.text_cos = 0.0;
      out.entries.push_back(make_entry(img_m.entry_id, src.title, *src.images.front(),
                                       filler_text(std::min(cfg.V, 20), derive_seed(cfg.seed, {"naive-filler", query.id, js}))));

      const KnowledgeEntry& other = *pool[rng.below(pool.size())];
      ManifestRecord txt_m = src_m;
      txt_m.kind = kname;
      txt_m.entry_id = fresh_id(rng, ctx.kb, used);
      txt_m.base_id = other.id;
      txt_m.center_index = -1;
      txt_m.initial_cos = txt_m.final_cos = 0.0;
      txt_m.image_seconds = 0.0;
      out.entries.push_back(make_entry(txt_m.entry_id, other.title, *other.images.front(), src.sections.front().text));
      out.manifest.push_back(std::move(img_m));
      out.manifest.push_back(std::move(txt_m));
    }
    return out;
  }

  EmbeddingVec fused_target;
  if (kind == AttackKind::poisoned_rag) {
    fused_target = approximate_target(ctx.backend, reference_images, query.question, cfg.k_clusters,
                                      derive_seed(cfg.seed, {"kmeans", query.id}))
                       .fused_target;
  }
  for (int j = 0; j < cfg.N; ++j) {
    const std::string js = std::to_string(j);
    Rng rng(derive_seed(cfg.seed, {kname, query.id, js}));
    const KnowledgeEntry& base = *pool[rng.below(pool.size())];
    ManifestRecord m;
    m.entry_id = fresh_id(rng, ctx.kb, used);
    m.query_id = query.id;
    m.kind = kname;
    m.j = j;
    m.base_id = base.id;
    // Unoptimized random image: uniform colour per 8x8 grid block.
    Image noise(ctx.kb.meta().image_height, ctx.kb.meta().image_width);
    {
      std::vector<double> block(8 * 8 * Image::kChannels);
      for (double& v : block) v = rng.uniform();
      for (int y = 0; y < noise.height(); ++y)
        for (int x = 0; x < noise.width(); ++x)
          for (int c = 0; c < Image::kChannels; ++c)
            noise.at(y, x, c) = block[((y * 8 / noise.height()) * 8 + x * 8 / noise.width()) * Image::kChannels + c];
    }
    std::string text;
    const auto t0 = Clock::now();
    switch (kind) {
      case AttackKind::prompt_injection:
        text = injection_text(query.question, query.target_answer);
        break;
      case AttackKind::corpus_poisoning:
        text = random_corpus_text(cfg.V, derive_seed(cfg.seed, {"corpus", query.id, js}));
        break;
      default: {
        const Image& reference = reference_images[j % reference_images.size()];
        auto t = craft_poison_text(ctx.backend, ctx.generator, ctx.oracle, reference, query, fused_target, cfg,
                                   derive_seed(cfg.seed, {"text", query.id, js}));
        m.rounds_used = t.rounds_used;
        m.generator_queries = t.generator_queries;
        text = std::move(t.text);
        break;
      }
    }
    m.text_seconds = seconds_since(t0);
    if (!fused_target.empty()) m.text_cos = dot(ctx.backend.embed_text(text), fused_target);
    out.entries.push_back(make_entry(m.entry_id, base.title, std::move(noise), std::move(text)));
    out.manifest.push_back(std::move(m));
  }
  return out;
}

CraftOutput build_attack(AttackKind kind, const CraftContext& ctx, const QueryCase& query,
                         const std::vector<Image>& reference_images, const AttackConfig& cfg) {
  if (kind == AttackKind::spa_vlm) return build_malicious_entries(ctx, query, reference_images, cfg);
  return build_baseline(kind, ctx, query, reference_images, cfg);
}

}  // namespace ragpoison
