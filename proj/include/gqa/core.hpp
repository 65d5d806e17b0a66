#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gqa {

/// Base for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed document (JSON syntax or field types).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed document that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

struct NoteSentence {
  int id = 0;
  std::string text;

  friend bool operator==(const NoteSentence&, const NoteSentence&) = default;
};

enum class RelevanceLabel { essential, supplementary, not_relevant };

std::string_view to_string(RelevanceLabel label);
std::optional<RelevanceLabel> relevance_from_string(std::string_view s);

struct AnswerSentence {
  int id = 0;
  std::string text;

  friend bool operator==(const AnswerSentence&, const AnswerSentence&) = default;
};

struct GoldAlignment {
  int answer_id = 0;
  std::set<int> note_ids;

  friend bool operator==(const GoldAlignment&, const GoldAlignment&) = default;
};

/// (answer_id, note_id)
using LinkKey = std::pair<int, int>;

struct GoldAnnotations {
  std::map<int, RelevanceLabel> relevance;
  std::vector<AnswerSentence> reference_answer;
  std::vector<GoldAlignment> alignments;

  std::set<int> ids_with(RelevanceLabel label) const;
  std::set<int> essential_ids() const { return ids_with(RelevanceLabel::essential); }
  std::set<int> supplementary_ids() const { return ids_with(RelevanceLabel::supplementary); }
  std::set<LinkKey> link_pairs() const;
  /// Reference answer sentences joined by single spaces.
  std::string reference_text() const;

  friend bool operator==(const GoldAnnotations&, const GoldAnnotations&) = default;
};

struct CaseRecord {
  std::string case_id;
  std::string patient_narrative;
  std::string patient_question;
  std::optional<std::string> clinician_question;
  std::vector<NoteSentence> note_sentences;
  std::optional<GoldAnnotations> gold;

  std::set<int> note_ids() const;
  const NoteSentence* find_sentence(int id) const;

  friend bool operator==(const CaseRecord&, const CaseRecord&) = default;
};

struct AlignmentLink {
  int answer_id = 0;
  int note_id = 0;
  double confidence = 1.0;

  LinkKey key() const { return {answer_id, note_id}; }
  friend bool operator==(const AlignmentLink&, const AlignmentLink&) = default;
};

struct PredictionBundle {
  std::string case_id;
  std::optional<std::string> st1_question;
  std::optional<std::set<int>> st2_essential_ids;
  std::optional<std::string> st3_answer;
  std::optional<std::vector<AlignmentLink>> st4_links;

  friend bool operator==(const PredictionBundle&, const PredictionBundle&) = default;
};

enum class Subtask { interpretation = 1, evidence = 2, answer = 3, alignment = 4 };

/// Accepts 1..4; throws ValidationError otherwise.
Subtask subtask_from_int(int n);
inline int to_int(Subtask s) { return static_cast<int>(s); }

/// Number of maximal non-whitespace runs.
std::size_t count_words(std::string_view text);
std::vector<std::string> split_words(std::string_view text);
std::string trim(std::string_view s);
/// Trims and collapses internal whitespace runs to single spaces.
std::string normalize_space(std::string_view s);

std::vector<CaseRecord> parse_cases(std::string_view document);
std::vector<CaseRecord> load_cases(const std::filesystem::path& path);

/// Checks every CaseRecord invariant; throws ValidationError naming the case.
void validate_case(const CaseRecord& c);

/// Links sorted by (answer_id, note_id); duplicates keep the first occurrence.
std::vector<AlignmentLink> canonical_links(std::vector<AlignmentLink> links);

std::string format_submission(const std::vector<PredictionBundle>& bundles, Subtask subtask);
void write_submission(const std::vector<PredictionBundle>& bundles, Subtask subtask,
                      const std::filesystem::path& path);
std::vector<PredictionBundle> parse_submission(std::string_view document, Subtask subtask);
std::vector<PredictionBundle> load_submission(const std::filesystem::path& path, Subtask subtask);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace gqa
