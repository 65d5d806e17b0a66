#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gqa/core.hpp"
#include "gqa/pipelines.hpp"
#include "gqa/prompts.hpp"

namespace gqa::opt {

struct OptimizationBudget {
  int num_instruction_candidates = 8;
  int num_demo_subsets = 6;
  int max_trials = 24;
  double judge_temperature = 0.3;

  void validate() const;
};

/// One point of the (instruction, demo subset) grid.
struct CandidateProgram {
  PromptProgram base;
  std::string instruction_variant;
  std::vector<Demo> demo_subset;
  std::optional<double> trial_score;

  PromptProgram materialize() const;
};

struct TrialRecord {
  int trial = 0;
  std::string instruction_hash;
  int demo_count = 0;
  std::optional<double> score;  // empty when the trial errored
  std::string error;
};

struct SearchResult {
  PromptProgram best;
  double best_score = 0.0;
  int best_trial = -1;  // -1 when every trial failed and the base is returned
  std::vector<TrialRecord> trials;
  std::vector<std::string> failures;
};

/// Scores one case under a candidate program, in [0, 1]. May throw.
using CaseObjective = std::function<double(const PromptProgram&, const CaseRecord&)>;

/// Base instruction followed by up to n-1 distinct model rewrites. Falls back
/// to the base instruction alone when the gateway fails.
std::vector<std::string> propose_instructions(const PromptProgram& base,
                                              const std::vector<CaseRecord>& dev_cases, int n,
                                              RunContext& ctx, double temperature = 0.3);

/// Rewrites listed as `instruction_<k>: ...` blocks.
std::vector<std::string> parse_instruction_proposals(std::string_view raw);

/// Subset 0 is `base_demos`; the rest are drawn from `pool` with sizes cycling
/// through {0, 2, 4}. Duplicate subsets are dropped.
std::vector<std::vector<Demo>> sample_demo_subsets(const std::vector<Demo>& base_demos,
                                                   const std::vector<Demo>& pool, int count,
                                                   std::uint64_t seed);

/// Trial 0 is (instructions[0], demo_subsets[0]); further grid cells are
/// visited in a seeded random order up to budget.max_trials. Returns the
/// argmax of the mean dev score; ties go to fewer demos, then the earlier trial.
SearchResult search(const PromptProgram& base, const std::vector<CaseRecord>& dev_cases,
                    const CaseObjective& objective, const OptimizationBudget& budget,
                    const std::vector<std::string>& instructions,
                    const std::vector<std::vector<Demo>>& demo_subsets, std::uint64_t seed = 0);

std::string trials_csv(const std::vector<TrialRecord>& trials);

// ----------------------------------------------------------------- objectives

struct ObjectiveScore {
  double value = 0.0;
  bool fallback = false;  // a judge failed and its term was substituted
};

/// Returns a score in [0, 1], or nullopt when the judge could not be read.
using SemanticJudge =
    std::function<std::optional<double>(const std::string& predicted, const std::string& reference,
                                        const CaseRecord& c)>;

/// Fraction of distinct reference tokens of length >= 5 found in the prediction.
double key_term_overlap(std::string_view predicted, std::string_view reference);
/// 1/3 each for: within word limit, ends with '?', patient-specific pronoun.
double question_structure(std::string_view predicted, std::size_t word_limit = 15);
double composite_st1(double semantic, double key_terms, double structure);

ObjectiveScore objective_st1(const std::string& predicted, const std::string& reference,
                             const CaseRecord& c, const SemanticJudge& judge);

double objective_st2(const std::set<int>& predicted_ids, const GoldAnnotations& gold);

using TextJudge = std::function<std::optional<double>(const std::string& predicted,
                                                      const std::string& reference,
                                                      const std::string& notes)>;

struct St3Judges {
  TextJudge faithfulness;
  TextJudge completeness;
  TextJudge coherence;
};

struct St3Weights {
  double faithfulness = 1.0;
  double completeness = 1.0;
  double lexical = 1.0;
  double coherence = 1.0;
};

ObjectiveScore objective_st3(const std::string& predicted, const std::string& reference,
                             const std::string& notes, const St3Judges& judges,
                             const St3Weights& weights = {});

double objective_st4(const std::vector<AlignmentLink>& predicted, const GoldAnnotations& gold);

/// Scores text against a rubric through the gateway.
class LlmJudge {
 public:
  LlmJudge(Gateway& gateway, std::string model_id, double temperature, int max_tokens = 2000);

  std::optional<double> rate(const std::string& stage, const std::string& rubric,
                             const std::string& material, const std::string& seed_tag) const;

  SemanticJudge semantic();
  St3Judges answer_judges();

  /// Reads `score: <x>` (or the first number) and requires it to lie in [0, 1].
  static std::optional<double> parse_score(std::string_view raw);

 private:
  Gateway& gateway_;
  std::string model_id_;
  double temperature_;
  int max_tokens_;
};

// ------------------------------------------------------------ orchestration

struct OptimizeOutcome {
  SearchResult result;
  std::vector<std::string> instructions;
  std::size_t demo_pool_size = 0;
};

/// Builds the candidate grid for one subtask and searches it on dev_cases.
/// `base` is the subtask's optimizable program (st1 interpret, st2 classify,
/// st3 answer, st4 align). Throws ValidationError when dev cases lack gold.
OptimizeOutcome optimize_subtask(Subtask subtask, const PromptProgram& base,
                                 const std::vector<CaseRecord>& dev_cases, RunContext& ctx,
                                 const OptimizationBudget& budget, std::uint64_t seed = 0,
                                 std::size_t reasoning_pairs_per_case = 0);

}  // namespace gqa::opt
