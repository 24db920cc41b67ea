#pragma once

#include <string>
#include <vector>

namespace ragpoison {

enum class PromptStyle { evqa, infoseek };

PromptStyle parse_prompt_style(const std::string& s);
const char* to_string(PromptStyle style);

/// Answer-generator prompt. Context sections are joined with "\n".
std::string answer_prompt(PromptStyle style, const std::vector<std::string>& context, const std::string& question);

/// Poisoned-text creation and rewrite prompts. The reference picture is
/// referred to as "<image>" because the rewrite op carries no pixels.
std::string creation_prompt(const std::string& question, const std::string& answer, int word_limit);
std::string rewrite_prompt(const std::string& question, const std::string& answer, const std::string& corpus,
                           int word_limit);

std::string paraphrase_prompt(const std::string& question);

/// Instruction text used by the prompt-injection baseline.
std::string injection_text(const std::string& question, const std::string& answer);

}  // namespace ragpoison
