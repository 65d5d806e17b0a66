#pragma once

#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gqa/consensus.hpp"
#include "gqa/core.hpp"
#include "gqa/gateway.hpp"
#include "gqa/prompts.hpp"

namespace gqa {

struct PipelineConfig {
  int R_st2 = 5;
  int R_st4 = 5;
  int candidates_st3 = 5;
  double temp_st1 = 0.3;
  double temp_st2 = 0.7;
  double temp_st3 = 0.9;
  double temp_st4 = 0.8;
  double tau_c = 0.9;
  int max_tokens_st1 = 2000;
  int max_tokens_other = 10000;
  int word_limit_st1 = 15;
  int word_limit_st3 = 75;
  consensus::ConfidenceMean confidence_mean = consensus::ConfidenceMean::emitting_runs;

  /// Throws ValidationError on a violated invariant.
  void validate() const;
  /// Sets a field by its name; throws ValidationError for unknown names or bad values.
  void set(const std::string& key, const std::string& value);
  nlohmann::json to_json() const;
};

class PipelineError : public Error {
 public:
  using Error::Error;
};

/// Per-case record of every model call and parser warning.
class Trace {
 public:
  void call(const std::string& stage, const std::string& seed_tag, const std::string& content);
  void warn(const std::string& message);
  void set(const std::string& key, nlohmann::json value);

  nlohmann::json to_json() const;
  std::map<std::string, int> call_counts() const;

 private:
  mutable std::mutex mu_;
  nlohmann::json calls_ = nlohmann::json::array();
  std::vector<std::string> warnings_;
  nlohmann::json extra_ = nlohmann::json::object();
};

struct RunContext {
  Gateway& gateway;
  PipelineConfig cfg;
  std::string model_id = "gpt-4.1";
  Trace* trace = nullptr;
};

/// Stage labels used for ledger accounting and scripted queues.
namespace stages {
inline const std::string kInterpret = "st1.interpret";
inline const std::string kClassify = "st2.classify";
inline const std::string kReasonEssential = "st2.reason_essential";
inline const std::string kReasonNonEssential = "st2.reason_nonessential";
inline const std::string kAnswer = "st3.answer";
inline const std::string kConsolidate = "st3.consolidate";
inline const std::string kAlign = "st4.align";
inline const std::string kReflect = "st4.reflect";
inline const std::string kVerify = "st4.verify";
}  // namespace stages

/// Cuts to `limit` words, strips trailing punctuation of the last word and
/// terminates with '?'. Throws PipelineError when nothing is left.
std::string enforce_question_format(std::string_view text, int limit);

/// Removes citation markers, then drops trailing sentences (hard-truncating the
/// last one if needed) until at most `limit` words remain.
std::string enforce_answer_format(std::string_view text, int limit);

std::string run_subtask1(const CaseRecord& c, const PromptProgram& program, RunContext& ctx);

std::set<int> run_subtask2(const CaseRecord& c, const PromptProgram& program, RunContext& ctx);

/// One demo per (case, sentence) pair for the classifier program. Pairs whose
/// call fails are skipped. `max_per_case` of 0 means every sentence.
std::vector<Demo> generate_reasoning_demos(const std::vector<CaseRecord>& cases,
                                           const PromptProgram& essential_program,
                                           const PromptProgram& non_essential_program, RunContext& ctx,
                                           std::size_t max_per_case = 0);

struct AnswerPrograms {
  PromptProgram answer = programs::answer();
  PromptProgram consolidate = programs::consolidate();
};

std::string run_subtask3(const CaseRecord& c, const std::set<int>& essential_ids,
                         const AnswerPrograms& programs, RunContext& ctx);

struct AlignmentPrograms {
  PromptProgram align = programs::align();
  PromptProgram reflect = programs::reflect();
  PromptProgram verify = programs::verify();
};

struct AlignmentResult {
  std::vector<AlignmentLink> links;  // retained only, mean confidence
  std::vector<consensus::LinkDecision> decisions;
};

AlignmentResult run_subtask4_detailed(const CaseRecord& c, const AlignmentPrograms& programs,
                                      RunContext& ctx);
std::vector<AlignmentLink> run_subtask4(const CaseRecord& c, const AlignmentPrograms& programs,
                                        RunContext& ctx);

}  // namespace gqa
