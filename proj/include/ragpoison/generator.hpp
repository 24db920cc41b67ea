#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ragpoison/image.hpp"
#include "ragpoison/prompts.hpp"

namespace ragpoison {

class ProtocolClient;

/// Defender-side answer generator.
class AnswerGenerator {
 public:
  virtual ~AnswerGenerator() = default;
  virtual std::string generate(const Image& image, const std::string& question,
                               const std::vector<std::string>& context) const = 0;
};

/// Scans context sections in rank order and returns the vocabulary entry that
/// occurs earliest (case-insensitive) in the first section containing any;
/// ties go to the longest candidate. "unknown" if nothing matches.
class StubAnswerGenerator final : public AnswerGenerator {
 public:
  explicit StubAnswerGenerator(std::vector<std::string> vocabulary);
  std::string generate(const Image& image, const std::string& question,
                       const std::vector<std::string>& context) const override;
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }

 private:
  std::vector<std::string> vocabulary_;
  std::vector<std::string> lowered_;
};

/// Renders the answer prompt and calls the `generate` op.
class ExternalAnswerGenerator final : public AnswerGenerator {
 public:
  ExternalAnswerGenerator(std::shared_ptr<ProtocolClient> client, PromptStyle style);
  std::string generate(const Image& image, const std::string& question,
                       const std::vector<std::string>& context) const override;

 private:
  std::shared_ptr<ProtocolClient> client_;
  PromptStyle style_;
};

/// Attacker-side text model: creates, rewrites and perturbs poisoned texts.
/// Seeds are explicit so crafting stays a pure function of its inputs.
class CorpusGenerator {
 public:
  virtual ~CorpusGenerator() = default;
  virtual std::string create(const Image& reference, const std::string& question, const std::string& answer,
                             int word_limit, std::uint64_t seed) const = 0;
  virtual std::string rewrite(const Image& reference, const std::string& question, const std::string& answer,
                              const std::string& corpus, int word_limit, std::uint64_t seed) const = 0;
  /// Candidate rewrites for the projection step (the input is not included).
  virtual std::vector<std::string> variants(const std::string& text, const std::string& question,
                                            const std::string& answer, int word_limit, int count,
                                            std::uint64_t seed) const = 0;
};

/// Template-based stand-in for an instruction-tuned model.
class StubCorpusGenerator final : public CorpusGenerator {
 public:
  std::string create(const Image& reference, const std::string& question, const std::string& answer, int word_limit,
                     std::uint64_t seed) const override;
  std::string rewrite(const Image& reference, const std::string& question, const std::string& answer,
                      const std::string& corpus, int word_limit, std::uint64_t seed) const override;
  std::vector<std::string> variants(const std::string& text, const std::string& question, const std::string& answer,
                                    int word_limit, int count, std::uint64_t seed) const override;
};

/// Uses the `rewrite` op with the creation / rewrite prompts.
class ExternalCorpusGenerator final : public CorpusGenerator {
 public:
  explicit ExternalCorpusGenerator(std::shared_ptr<ProtocolClient> client);
  std::string create(const Image& reference, const std::string& question, const std::string& answer, int word_limit,
                     std::uint64_t seed) const override;
  std::string rewrite(const Image& reference, const std::string& question, const std::string& answer,
                      const std::string& corpus, int word_limit, std::uint64_t seed) const override;
  std::vector<std::string> variants(const std::string& text, const std::string& question, const std::string& answer,
                                    int word_limit, int count, std::uint64_t seed) const override;

 private:
  std::shared_ptr<ProtocolClient> client_;
};

class Paraphraser {
 public:
  virtual ~Paraphraser() = default;
  virtual std::string paraphrase(const std::string& question, std::uint64_t seed) const = 0;
};

/// Seeded synonym substitution plus a reordering template. At most half of
/// the content words are substituted.
class StubParaphraser final : public Paraphraser {
 public:
  std::string paraphrase(const std::string& question, std::uint64_t seed) const override;
};

class ExternalParaphraser final : public Paraphraser {
 public:
  explicit ExternalParaphraser(std::shared_ptr<ProtocolClient> client);
  std::string paraphrase(const std::string& question, std::uint64_t seed) const override;

 private:
  std::shared_ptr<ProtocolClient> client_;
};

/// Filler sentences used by the stub generators and the naive baseline.
std::string filler_text(int words, std::uint64_t seed);

}  // namespace ragpoison
