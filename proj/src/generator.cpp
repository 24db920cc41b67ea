#include "ragpoison/generator.hpp"

#include <algorithm>
#include <array>
#include <map>

#include "ragpoison/error.hpp"
#include "ragpoison/protocol.hpp"
#include "ragpoison/rng.hpp"
#include "ragpoison/text.hpp"

namespace ragpoison {

namespace {

constexpr std::array kOpenings = {"According to the catalog,",   "Historians agree that",
                                  "It is well documented that",  "Recent records confirm that",
                                  "As every guide explains,",    "Experts have long noted that",
                                  "Reference works state that",  "Most encyclopedias report that"};
constexpr std::array kFiller = {"This fact appears in many reference works.",
                                "Visitors are often surprised to learn this.",
                                "The detail is mentioned in museum guides.",
                                "Many travelers ask about it.",
                                "Local guides repeat this story often.",
                                "It remains a popular topic among collectors.",
                                "Several books discuss the matter at length.",
                                "The information was confirmed by later studies.",
                                "Students often learn this early.",
                                "The story has been retold for generations."};

std::string strip_question(std::string q) {
  while (!q.empty() && (q.back() == '?' || q.back() == '.' || q.back() == ' ')) q.pop_back();
  return q;
}

}  // namespace

std::string filler_text(int words, std::uint64_t seed) {
  Rng rng(seed);
  std::string out;
  while (static_cast<int>(word_count(out)) < words) {
    if (!out.empty()) out += ' ';
    out += kFiller[rng.below(kFiller.size())];
  }
  return truncate_words(out, words);
}

StubAnswerGenerator::StubAnswerGenerator(std::vector<std::string> vocabulary) : vocabulary_(std::move(vocabulary)) {
  for (const auto& v : vocabulary_) lowered_.push_back(normalize_ws_lower(v));
}

std::string StubAnswerGenerator::generate(const Image&, const std::string&,
                                          const std::vector<std::string>& context) const {
  for (const auto& section : context) {
    const std::string hay = normalize_ws_lower(section);
    std::size_t best_pos = std::string::npos;
    std::size_t best = 0;
    for (std::size_t i = 0; i < lowered_.size(); ++i) {
      if (lowered_[i].empty()) continue;
      const auto pos = hay.find(lowered_[i]);
      if (pos == std::string::npos) continue;
      if (pos < best_pos || (pos == best_pos && lowered_[i].size() > lowered_[best].size())) {
        best_pos = pos;
        best = i;
      }
    }
    if (best_pos != std::string::npos) return vocabulary_[best];
  }
  return "unknown";
}

ExternalAnswerGenerator::ExternalAnswerGenerator(std::shared_ptr<ProtocolClient> client, PromptStyle style)
    : client_(std::move(client)), style_(style) {
  if (!client_) throw ValidationError("external generator requires a protocol client");
}

std::string ExternalAnswerGenerator::generate(const Image& image, const std::string& question,
                                              const std::vector<std::string>& context) const {
  return read_text_field(
      client_->call(request_generate(image, question, context, answer_prompt(style_, context, question))));
}

std::string StubCorpusGenerator::create(const Image&, const std::string& question, const std::string& answer,
                                        int word_limit, std::uint64_t seed) const {
  if (word_limit < 1) throw ValidationError("word limit must be >= 1");
  Rng rng(seed);
  std::string text = std::string(kOpenings[rng.below(kOpenings.size())]) + " the answer to " +
                     strip_question(question) + " is " + answer + ".";
  const int tail = 1 + static_cast<int>(rng.below(2));
  for (int i = 0; i < tail; ++i) text += std::string(" ") + kFiller[rng.below(kFiller.size())];
  return truncate_words(text, word_limit, answer);
}

std::string StubCorpusGenerator::rewrite(const Image&, const std::string& question, const std::string& answer,
                                         const std::string& corpus, int word_limit, std::uint64_t seed) const {
  if (word_limit < 1) throw ValidationError("word limit must be >= 1");
  Rng rng(seed);
  // Lead with the answer, then keep whatever of the old corpus fits.
  std::string text = answer + " is the answer to " + strip_question(question) + ". " +
                     kOpenings[rng.below(kOpenings.size())] + " " + corpus;
  return truncate_words(text, word_limit, answer);
}

std::vector<std::string> StubCorpusGenerator::variants(const std::string& text, const std::string& question,
                                                       const std::string& answer, int word_limit, int count,
                                                       std::uint64_t seed) const {
  Rng rng(seed);
  const auto keywords = content_tokens(question);
  const std::string answer_l = to_lower(answer);
  auto protected_word = [&](const std::string& w) {
    const std::string lw = to_lower(w);
    if (!answer_l.empty() && lw.find(answer_l) != std::string::npos) return true;
    return std::any_of(keywords.begin(), keywords.end(), [&](const std::string& k) { return lw.find(k) == 0; });
  };
  std::vector<std::string> out;
  for (int n = 0; n < count; ++n) {
    auto words = split_words(text);
    const int edits = 1 + static_cast<int>(rng.below(3));
    for (int e = 0; e < edits && !words.empty(); ++e) {
      switch (rng.below(3)) {
        case 0:
          if (!keywords.empty())
            words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.below(words.size() + 1)),
                         keywords[rng.below(keywords.size())]);
          break;
        case 1:
          if (words.size() >= 2) {
            const auto i = rng.below(words.size() - 1);
            std::swap(words[i], words[i + 1]);
          }
          break;
        default: {
          std::vector<std::size_t> filler;
          for (std::size_t i = 0; i < words.size(); ++i)
            if (!protected_word(words[i])) filler.push_back(i);
          if (!filler.empty()) words.erase(words.begin() + static_cast<std::ptrdiff_t>(filler[rng.below(filler.size())]));
          break;
        }
      }
    }
    std::string v = truncate_words(join_words(words), word_limit, answer);
    if (!v.empty() && contains_answer(v, answer)) out.push_back(std::move(v));
  }
  return out;
}

ExternalCorpusGenerator::ExternalCorpusGenerator(std::shared_ptr<ProtocolClient> client) : client_(std::move(client)) {
  if (!client_) throw ValidationError("external generator requires a protocol client");
}

std::string ExternalCorpusGenerator::create(const Image&, const std::string& question, const std::string& answer,
                                            int word_limit, std::uint64_t) const {
  return read_text_field(client_->call(request_rewrite(creation_prompt(question, answer, word_limit))));
}

std::string ExternalCorpusGenerator::rewrite(const Image&, const std::string& question, const std::string& answer,
                                             const std::string& corpus, int word_limit, std::uint64_t) const {
  return read_text_field(client_->call(request_rewrite(rewrite_prompt(question, answer, corpus, word_limit))));
}

std::vector<std::string> ExternalCorpusGenerator::variants(const std::string& text, const std::string& question,
                                                           const std::string& answer, int word_limit, int count,
                                                           std::uint64_t) const {
  std::vector<std::string> out;
  for (int i = 0; i < count; ++i) {
    std::string v = read_text_field(client_->call(request_rewrite(rewrite_prompt(question, answer, text, word_limit))));
    if (!v.empty()) out.push_back(std::move(v));
  }
  return out;
}

std::string StubParaphraser::paraphrase(const std::string& question, std::uint64_t seed) const {
  if (question.empty()) throw ValidationError("cannot paraphrase an empty question");
  static const std::map<std::string, std::string> kFunctionSyn = {
      {"what", "which"}, {"this", "the pictured"}, {"who", "which person"}, {"does", "would"}, {"tell", "share"}};
  static const std::map<std::string, std::string> kContentSyn = {
      {"represent", "stand for"}, {"symbol", "sign"},      {"origin", "source"},     {"builder", "constructor"},
      {"maker", "creator"},       {"founder", "establisher"}, {"designer", "architect"}, {"homeland", "native land"},
      {"patron", "sponsor"},      {"namesake", "eponym"},  {"flag", "banner"}};
  static constexpr std::array kTemplates = {"Could you tell me {q}?", "I would like to know {q}.",
                                            "Do you know {q}?", "Please explain {q}.", "{q}, if you know?"};
  Rng rng(seed);
  auto words = split_words(strip_question(question));
  const auto content = content_tokens(question);
  std::size_t budget = content.size() / 2;
  for (auto& w : words) {
    const std::string lw = to_lower(w);
    if (auto it = kFunctionSyn.find(lw); it != kFunctionSyn.end()) {
      if (rng.below(2) == 0) w = it->second;
    } else if (auto ct = kContentSyn.find(lw); ct != kContentSyn.end() && budget > 0) {
      if (rng.below(2) == 0) {
        w = ct->second;
        --budget;
      }
    }
  }
  std::string q = join_words(words);
  if (!q.empty()) q[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(q[0])));
  std::string t = kTemplates[rng.below(kTemplates.size())];
  t.replace(t.find("{q}"), 3, q);
  if (!t.empty()) t[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
  return t;
}

ExternalParaphraser::ExternalParaphraser(std::shared_ptr<ProtocolClient> client) : client_(std::move(client)) {
  if (!client_) throw ValidationError("external paraphraser requires a protocol client");
}

std::string ExternalParaphraser::paraphrase(const std::string& question, std::uint64_t) const {
  if (question.empty()) throw ValidationError("cannot paraphrase an empty question");
  std::string out = read_text_field(client_->call(request_rewrite(paraphrase_prompt(question))));
  if (normalize_ws_lower(out).empty()) throw RuntimeError("paraphraser returned an empty question");
  return out;
}

}  // namespace ragpoison
