#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ragpoison/embed.hpp"
#include "ragpoison/error.hpp"
#include "ragpoison/index.hpp"
#include "ragpoison/synth.hpp"
#include "test_util.hpp"

using namespace ragpoison;
using ragpoison::testing::TempDir;

namespace {

ToyBackend toy(double beta = 0.5, std::uint64_t seed = 0, int dim = 128) {
  BackendDescriptor d;
  d.fusion_weight = beta;
  d.seed = seed;
  d.dim = dim;
  return ToyBackend(d);
}

Image shift_right(const Image& img) {
  Image out = img;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 1; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x - 1, c);
  return out;
}

}  // namespace

TEST(ToyBackend, OutputsAreUnitNorm) {
  const auto b = toy();
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto img = ragpoison::testing::random_image(rng, 16 + static_cast<int>(rng.below(50)), 16);
    const auto s = ragpoison::testing::random_sentence(rng, 1 + static_cast<int>(rng.below(12)));
    EXPECT_NEAR(norm(b.embed_image(img)), 1.0, 1e-6);
    EXPECT_NEAR(norm(b.embed_text(s)), 1.0, 1e-6);
    EXPECT_NEAR(norm(b.embed_fused(img, s)), 1.0, 1e-6);
  }
}

TEST(ToyBackend, ZeroImageMapsToE1AndGradientIsDegenerate) {
  const auto b = toy();
  const Image zero(64, 64, 0.0);
  const auto v = b.embed_image(zero);
  EXPECT_EQ(v[0], 1.0);
  for (std::size_t i = 1; i < v.size(); ++i) EXPECT_EQ(v[i], 0.0);
  EXPECT_THROW(b.image_cos_grad(zero, v), DegenerateInputError);
  EXPECT_THROW(b.embed_text(""), ValidationError);
  EXPECT_EQ(b.embed_text("?!")[0], 1.0);
}

TEST(ToyBackend, PoolingFollowsGrid) {
  const auto b = toy();
  Image img(16, 16, 0.0);
  img.at(0, 0, 0) = 1.0;   // cell (0,0), red
  img.at(15, 15, 2) = 0.5;  // cell (7,7), blue
  const auto p = b.pool(img);
  ASSERT_EQ(p.size(), 192u);
  EXPECT_DOUBLE_EQ(p[0], 0.25);
  EXPECT_DOUBLE_EQ(p[2 * 64 + 63], 0.125);
  double total = 0;
  for (double x : p) total += x;
  EXPECT_DOUBLE_EQ(total, 0.375);
}

TEST(ToyBackend, OnePixelTranslationIsNearlyInvariant) {
  const auto b = toy();
  Rng rng(2);
  for (int i = 0; i < 10; ++i) {
    const auto img = ragpoison::testing::smooth_image(rng);
    EXPECT_GE(dot(b.embed_image(img), b.embed_image(shift_right(img))), 0.99);
  }
}

TEST(ToyBackend, DisjointVocabularyTextsAreFarApart) {
  const auto b = toy();
  const double c = dot(b.embed_text("red lantern harbor"), b.embed_text("quantum violin desert"));
  EXPECT_LT(std::abs(c), 0.3);
  EXPECT_NEAR(c, -0.016868069388220028, 1e-12);  // frozen for seed 0, dim 128
  EXPECT_NEAR(dot(b.embed_text("Red, LANTERN!"), b.embed_text("red lantern")), 1.0, 1e-12);
}

TEST(ToyBackend, FusionEndpoints) {
  Rng rng(3);
  const auto img = ragpoison::testing::smooth_image(rng);
  const std::string q = "what is this building";
  const auto b0 = toy(0.0), b1 = toy(1.0), bh = toy(0.5);
  EXPECT_NEAR(dot(b0.embed_fused(img, q), b0.embed_text(q)), 1.0, 1e-12);
  EXPECT_NEAR(dot(b1.embed_fused(img, q), b1.embed_image(img)), 1.0, 1e-12);
  const auto a = bh.embed_image(img), t = bh.embed_text(q);
  EmbeddingVec mid(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) mid[i] = a[i] + t[i];
  EXPECT_NEAR(dot(bh.embed_fused(img, q), normalized_or_e1(mid)), 1.0, 1e-12);
}

TEST(ToyBackend, FusionWeightIsMonotone) {
  Rng rng(4);
  const auto img = ragpoison::testing::smooth_image(rng);
  const std::string q = "who built this tower";
  double prev = -2;
  for (double beta = 0.0; beta <= 1.0001; beta += 0.1) {
    const auto b = toy(std::min(beta, 1.0));
    const double c = dot(b.embed_fused(img, q), b.embed_image(img));
    EXPECT_GE(c, prev - 1e-12);
    prev = c;
  }
}

TEST(ToyBackend, GradientMatchesFiniteDifferences) {
  const auto b = toy();
  Rng rng(5);
  for (int trial = 0; trial < 3; ++trial) {
    const auto img = ragpoison::testing::smooth_image(rng, 16, 16);
    const auto target = b.embed_image(ragpoison::testing::smooth_image(rng, 16, 16));
    const auto g = b.image_cos_grad(img, target);
    ASSERT_TRUE(g.same_shape(img));
    for (int k = 0; k < 20; ++k) {
      const int y = static_cast<int>(rng.below(16)), x = static_cast<int>(rng.below(16)),
                c = static_cast<int>(rng.below(3));
      const double h = 1e-4;
      Image p = img, m = img;
      p.at(y, x, c) += h;
      m.at(y, x, c) -= h;
      const double fd = (dot(b.embed_image(p), target) - dot(b.embed_image(m), target)) / (2 * h);
      EXPECT_NEAR(g.at(y, x, c), fd, 1e-6 + 1e-4 * std::abs(fd));
    }
  }
}

TEST(ToyBackend, SeedAndDimChangeTheEncoder) {
  Rng rng(6);
  const auto img = ragpoison::testing::smooth_image(rng);
  EXPECT_NE(toy(0.5, 0).embed_image(img), toy(0.5, 1).embed_image(img));
  EXPECT_EQ(toy(0.5, 0, 32).embed_image(img).size(), 32u);
  EXPECT_NE(toy(0.5, 0).descriptor().hash(), toy(0.5, 1).descriptor().hash());
  EXPECT_NE(toy(0.5, 0).descriptor().hash(), toy(0.2, 0).descriptor().hash());
}

TEST(BackendDescriptor, Validation) {
  BackendDescriptor d;
  d.fusion_weight = 1.5;
  EXPECT_THROW(d.validate(), ValidationError);
  d = {};
  d.dim = 0;
  EXPECT_THROW(d.validate(), ValidationError);
  d = {};
  d.kind = BackendDescriptor::Kind::external;
  EXPECT_THROW(d.validate(), ValidationError);
  EXPECT_THROW(parse_backend_kind("gpu"), ValidationError);
}

TEST(EmbeddingIndex, SaveLoadRoundTrip) {
  TempDir dir("index");
  const auto b = toy();
  Rng rng(8);
  const auto kb = ragpoison::testing::random_kb(rng, 20);
  const auto idx = EmbeddingIndex::build(b, kb);
  EXPECT_EQ(idx.count(), kb.num_images());
  idx.save(dir / "index.bin");
  EXPECT_EQ(EmbeddingIndex::load(dir / "index.bin"), idx);
  EXPECT_TRUE(idx.matches(kb, b));
}

TEST(EmbeddingIndex, RebuildsWhenKbOrBackendChanges) {
  TempDir dir("index-hash");
  const auto b = toy();
  Rng rng(9);
  const auto kb = ragpoison::testing::random_kb(rng, 10);
  bool rebuilt = false;
  const auto first = EmbeddingIndex::load_or_build(b, kb, dir / "i.bin", &rebuilt);
  EXPECT_TRUE(rebuilt);
  EmbeddingIndex::load_or_build(b, kb, dir / "i.bin", &rebuilt);
  EXPECT_FALSE(rebuilt);

  const auto other = ragpoison::testing::random_kb(rng, 10);
  const auto second = EmbeddingIndex::load_or_build(b, other, dir / "i.bin", &rebuilt);
  EXPECT_TRUE(rebuilt);
  EXPECT_TRUE(second.matches(other, b));
  EXPECT_FALSE(second.matches(kb, b));

  EmbeddingIndex::load_or_build(toy(0.5, 3), other, dir / "i.bin", &rebuilt);
  EXPECT_TRUE(rebuilt);
}

TEST(EmbeddingIndex, RejectsCorruptFiles) {
  TempDir dir("index-bad");
  {
    std::ofstream(dir / "bad.bin") << "NOTANIDX";
  }
  EXPECT_THROW(EmbeddingIndex::load(dir / "bad.bin"), ValidationError);
  EXPECT_THROW(EmbeddingIndex::load(dir / "none.bin"), RuntimeError);
}

TEST(EmbeddingIndex, SyntheticRowsAreUnitNorm) {
  const auto r = synth_kb(50, 5, 1, 2);
  const auto idx = EmbeddingIndex::build(toy(), r.kb);
  ASSERT_EQ(idx.count(), 50u);
  for (std::size_t i = 0; i < idx.count(); ++i) {
    double s = 0;
    for (float x : idx.vector(i)) s += static_cast<double>(x) * x;
    EXPECT_NEAR(std::sqrt(s), 1.0, 1e-6);
  }
}
