#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "gqa/core.hpp"

namespace gqa::eval {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Harmonic mean, 0 when p + r == 0.
double f1_score(double precision, double recall);

struct EvidenceMetrics {
  PRF strict_micro;
  PRF lenient_micro;
  PRF strict_macro;
  PRF lenient_macro;
};

struct AlignmentMetrics {
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  double micro_f1 = 0.0;
};

/// Strict counts essential sentences as hits; lenient also credits
/// supplementary ones in precision. Recall always uses the essential set.
/// Throws ValidationError when a predicted case lacks gold.
EvidenceMetrics evidence_metrics(const std::map<std::string, std::set<int>>& predictions,
                                 const std::map<std::string, GoldAnnotations>& golds);

/// Links compared as (answer_id, note_id) pairs pooled over cases.
AlignmentMetrics alignment_metrics(const std::map<std::string, std::vector<AlignmentLink>>& predictions,
                                   const std::map<std::string, GoldAnnotations>& golds);

/// Lowercased alphanumeric runs; punctuation and whitespace separate tokens.
std::vector<std::string> tokenize(std::string_view text);

PRF rouge_l(std::string_view candidate, std::string_view reference);

/// Sentence BLEU-4 with add-one smoothing on orders 2..4 and brevity penalty.
double bleu(std::string_view candidate, const std::vector<std::string>& references);

enum class Violation { over_word_limit, missing_question_mark, citation_marker_present, empty };
std::string_view to_string(Violation v);

inline constexpr std::size_t kQuestionWordLimit = 15;
inline constexpr std::size_t kAnswerWordLimit = 75;

/// Checks a subtask 1 or 3 output. Answer word counts ignore citation markers.
std::vector<Violation> validate_output(std::string_view text, Subtask subtask,
                                       std::size_t word_limit = 0);

bool has_citation_marker(std::string_view text);
/// Removes `[1]`, `[1, 2]`, `[3-5]` style markers and normalizes whitespace.
std::string strip_citation_markers(std::string_view text);

}  // namespace gqa::eval
