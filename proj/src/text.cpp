#include "ragpoison/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace ragpoison {

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string normalize_ws_lower(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

bool contains_answer(std::string_view haystack, std::string_view needle) {
  const std::string n = normalize_ws_lower(needle);
  if (n.empty()) return false;
  return normalize_ws_lower(haystack).find(n) != std::string::npos;
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::size_t word_count(std::string_view s) { return split_words(s).size(); }

std::string truncate_words(const std::string& text, int limit, const std::string& keep) {
  auto words = split_words(text);
  if (limit < 0) limit = 0;
  if (words.size() <= static_cast<std::size_t>(limit)) return join_words(words);
  std::vector<std::string> head(words.begin(), words.begin() + limit);
  if (keep.empty() || contains_answer(join_words(head), keep) || !contains_answer(text, keep)) return join_words(head);
  auto front = split_words(keep);
  std::vector<std::string> out = front;
  for (const auto& w : words) {
    if (out.size() >= static_cast<std::size_t>(limit)) break;
    out.push_back(w);
  }
  if (out.size() > static_cast<std::size_t>(limit)) out.resize(limit);
  return join_words(out);
}

bool is_stopword(const std::string& t) {
  static constexpr std::array kStop = {"a",     "an",   "the",  "is",    "are",  "was",  "were", "be",   "of",
                                       "to",    "in",   "on",   "for",   "and",  "or",   "this", "that", "these",
                                       "those", "it",   "its",  "what",  "which", "who", "whom", "how",  "why",
                                       "when",  "where", "does", "do",   "did",  "can",  "could", "you", "me",
                                       "i",     "my",   "tell", "please", "with", "as",  "by",   "at",   "from"};
  return std::find(kStop.begin(), kStop.end(), t) != kStop.end();
}

std::vector<std::string> content_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty() && !is_stopword(cur)) out.push_back(cur);
    cur.clear();
  };
  for (unsigned char c : s) {
    if (std::isalnum(c)) cur += static_cast<char>(std::tolower(c));
    else flush();
  }
  flush();
  return out;
}

}  // namespace ragpoison
