#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gqa/core.hpp"
#include "gqa/gateway.hpp"

namespace gqa {

struct Field {
  std::string name;
  std::string description;

  friend bool operator==(const Field&, const Field&) = default;
};

struct Demo {
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;

  friend bool operator==(const Demo&, const Demo&) = default;
};

/// An optimizable prompt: instruction, typed fields and few-shot demos.
struct PromptProgram {
  std::string name;
  std::string instruction;
  std::vector<Field> input_fields;
  std::vector<Field> output_fields;
  std::vector<Demo> demos;
  /// Ask for a `reasoning:` field before the output fields.
  bool chain_of_thought = false;

  friend bool operator==(const PromptProgram&, const PromptProgram&) = default;
};

class RenderError : public Error {
 public:
  using Error::Error;
};

/// Throws ValidationError on duplicate field names, an empty instruction, or
/// demos that use undeclared fields.
void validate_program(const PromptProgram& program);

/// system (instruction + output contract), demos as user/assistant pairs,
/// then the inputs as the final user turn.
std::vector<ChatMessage> render(const PromptProgram& program,
                                const std::map<std::string, std::string>& inputs);

/// The text appended to the instruction describing the expected reply layout.
std::string output_contract(const PromptProgram& program);

nlohmann::json to_json(const PromptProgram& program);
PromptProgram program_from_json(const nlohmann::json& doc);
void save_program(const PromptProgram& program, const std::filesystem::path& path);
PromptProgram load_program(const std::filesystem::path& path);
/// Hex SHA-256 of the serialized program.
std::string program_hash(const PromptProgram& program);

// ------------------------------------------------------------------ parsers

enum class Verdict { essential, irrelevant };

struct SentenceVerdict {
  int note_id = 0;
  Verdict label = Verdict::irrelevant;
  int score = 0;
  std::string reasoning;
  /// The sentence text echoed by the model; ignored for classification.
  std::string sentence;

  friend bool operator==(const SentenceVerdict&, const SentenceVerdict&) = default;
};

struct VerdictParse {
  std::vector<SentenceVerdict> verdicts;
  /// Expected ids without a verdict; downstream treats them as irrelevant.
  std::set<int> absent;
  int malformed = 0;
  std::vector<std::string> warnings;
};

/// Lines of the form `<id>: <sentence> -> essential|irrelevant -> <score> -> <reasoning>`.
/// Throws ParseError when no line parses.
VerdictParse parse_st2(std::string_view raw, const std::set<int>& expected_ids);
std::string format_verdict(const SentenceVerdict& v);

struct LinkParse {
  std::vector<AlignmentLink> links;
  /// Answer ids that had a well-formed line (possibly with no links).
  std::set<int> answered;
  int malformed = 0;
  std::vector<std::string> warnings;
};

/// Lines of the form `answer_sentence_k: [ids] (confidence=[scores])`.
/// Throws ParseError when no line parses.
LinkParse parse_st4(std::string_view raw, int answer_count, const std::set<int>& note_ids);
/// One line per answer sentence 1..answer_count; confidences printed with two decimals.
std::string format_alignment(std::span<const AlignmentLink> links, int answer_count);
std::string format_alignment_line(int answer_id, std::span<const AlignmentLink> links);

/// Text after the last line-leading `<field>:` up to the next line-leading
/// label from `labels` (or end of text), trimmed. Whole trimmed text when the
/// label never appears.
std::string parse_labeled_field(std::string_view raw, std::string_view field,
                                std::span<const std::string> labels = {});

// ----------------------------------------------------------- default programs

namespace programs {

inline constexpr std::string_view kInterpret = "st1.interpret";
inline constexpr std::string_view kEssentialReasoning = "st2.reason_essential";
inline constexpr std::string_view kNonEssentialReasoning = "st2.reason_nonessential";
inline constexpr std::string_view kClassify = "st2.classify";
inline constexpr std::string_view kAnswer = "st3.answer";
inline constexpr std::string_view kConsolidate = "st3.consolidate";
inline constexpr std::string_view kAlign = "st4.align";
inline constexpr std::string_view kReflect = "st4.reflect";
inline constexpr std::string_view kVerify = "st4.verify";

PromptProgram interpret();
PromptProgram essential_reasoning();
PromptProgram non_essential_reasoning();
PromptProgram classify();
PromptProgram answer();
PromptProgram consolidate();
PromptProgram align();
PromptProgram reflect();
PromptProgram verify();

/// Every default program, keyed by name.
std::map<std::string, PromptProgram> defaults();

}  // namespace programs

/// Shared input renderings.
std::string render_note_excerpt(const CaseRecord& c);
std::string render_answer_sentences(const std::vector<AnswerSentence>& answer);

}  // namespace gqa
