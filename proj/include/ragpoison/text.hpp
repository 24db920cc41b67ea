#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ragpoison {

std::string to_lower(std::string_view s);
/// Lowercase, collapse whitespace runs to one space, trim.
std::string normalize_ws_lower(std::string_view s);
/// Case-insensitive, whitespace-normalized substring test. An empty needle
/// never matches.
bool contains_answer(std::string_view haystack, std::string_view needle);

std::vector<std::string> split_words(std::string_view s);
std::string join_words(const std::vector<std::string>& words);
std::size_t word_count(std::string_view s);

/// Keeps the first `limit` whitespace-separated words. If that loses `keep`
/// (case-insensitive) the words of `keep` are moved to the front first.
std::string truncate_words(const std::string& text, int limit, const std::string& keep = "");

bool is_stopword(const std::string& lower_token);
/// Lowercase alphanumeric tokens of `s` that are not stopwords.
std::vector<std::string> content_tokens(std::string_view s);

}  // namespace ragpoison
