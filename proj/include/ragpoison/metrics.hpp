#pragma once

#include <string>
#include <vector>

namespace ragpoison {

struct SectionRef {
  std::string entry_id;
  std::string section_id;
  bool malicious = false;
};

struct EvalRecord {
  int trial = 0;
  std::string query_id;
  std::string question;  // as seen by the pipeline (after paraphrasing)
  std::string answer;
  std::string target_answer;
  std::string gold_answer;
  bool success = false;
  std::vector<SectionRef> retrieved;
  std::vector<SectionRef> reranked;
  int malicious_texts = 0;       // crafted texts for this query
  int queries_to_generator = 0;  // summed over those texts
  int rounds_used = 0;           // summed over those texts
  double image_craft_seconds = 0.0;
  double text_craft_seconds = 0.0;

  int reranked_malicious() const;
  /// Per-query precision; 0 when nothing was returned.
  double precision() const;
};

/// Case-insensitive, whitespace-normalized containment.
bool answer_success(const std::string& answer, const std::string& target_answer);

/// Fraction of successful records. Throws ValidationError on an empty set.
double asr(const std::vector<EvalRecord>& records);

/// Micro-averaged: malicious reranked sections / all reranked sections (the
/// returned count, which can be below k2). Records are truncated to k2.
double precision(const std::vector<EvalRecord>& records, int k2);

}  // namespace ragpoison
