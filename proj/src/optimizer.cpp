#include "gqa/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include "gqa/evaluation.hpp"

namespace gqa::opt {

void OptimizationBudget::validate() const {
  if (num_instruction_candidates < 1 || num_demo_subsets < 1 || max_trials < 1) {
    throw ValidationError("optimization budget values must be >= 1");
  }
  if (max_trials > num_instruction_candidates * num_demo_subsets) {
    throw ValidationError("max_trials exceeds instruction candidates x demo subsets");
  }
  if (!(judge_temperature >= 0.0 && judge_temperature <= 2.0)) {
    throw ValidationError("judge_temperature must lie in [0, 2]");
  }
}

PromptProgram CandidateProgram::materialize() const {
  PromptProgram p = base;
  p.instruction = instruction_variant;
  p.demos = demo_subset;
  return p;
}

// ----------------------------------------------------------------- proposals

std::vector<std::string> parse_instruction_proposals(std::string_view raw) {
  static const std::regex label(R"(^\s*(?:[-*]\s*)?instruction_(\d+)\s*:(.*)$)", std::regex::icase);
  std::vector<std::string> out;
  std::optional<std::string> cur;
  std::istringstream in{std::string(raw)};
  std::string line;
  while (std::getline(in, line)) {
    std::smatch m;
    if (std::regex_match(line, m, label)) {
      if (cur) out.push_back(trim(*cur));
      cur = m[2].str();
    } else if (cur) {
      *cur += '\n';
      *cur += line;
    }
  }
  if (cur) out.push_back(trim(*cur));
  out.erase(std::remove_if(out.begin(), out.end(), [](const std::string& s) { return s.empty(); }),
            out.end());
  return out;
}

std::vector<std::string> propose_instructions(const PromptProgram& base,
                                              const std::vector<CaseRecord>& dev_cases, int n,
                                              RunContext& ctx, double temperature) {
  if (n < 1) throw ValidationError("need at least one instruction candidate");
  std::vector<std::string> out{base.instruction};
  if (n == 1) return out;

  std::ostringstream system;
  system << "You are an expert prompt engineer. Propose " << (n - 1)
         << " alternative instructions for the task below. Each alternative must keep every "
            "constraint and the output format of the original. Write each proposal as a block "
            "introduced by `instruction_<k>:` at the start of a line.";
  std::ostringstream user;
  user << "task_instruction: " << base.instruction << "\n\ninput_fields:";
  for (const auto& f : base.input_fields) user << "\n- " << f.name << ": " << f.description;
  user << "\n\noutput_fields:";
  for (const auto& f : base.output_fields) user << "\n- " << f.name << ": " << f.description;
  for (std::size_t i = 0; i < std::min<std::size_t>(2, dev_cases.size()); ++i) {
    user << "\n\nexample_" << (i + 1) << ": " << dev_cases[i].patient_question;
  }

  ChatRequest req;
  req.model_id = ctx.model_id;
  req.messages = {{Role::system, system.str()}, {Role::user, user.str()}};
  req.temperature = temperature;
  req.max_tokens = ctx.cfg.max_tokens_other;
  req.seed_tag = base.name + "/propose";
  req.stage = "opt.propose";
  std::string raw;
  try {
    raw = ctx.gateway.complete(req).content;
  } catch (const GatewayError& e) {
    if (ctx.trace) ctx.trace->warn(std::string("instruction proposal failed: ") + e.what());
    return out;
  }
  std::set<std::string> seen{normalize_space(base.instruction)};
  for (auto& proposal : parse_instruction_proposals(raw)) {
    if (static_cast<int>(out.size()) >= n) break;
    if (!seen.insert(normalize_space(proposal)).second) continue;
    out.push_back(std::move(proposal));
  }
  return out;
}

std::vector<std::vector<Demo>> sample_demo_subsets(const std::vector<Demo>& base_demos,
                                                   const std::vector<Demo>& pool, int count,
                                                   std::uint64_t seed) {
  std::vector<std::vector<Demo>> subsets{base_demos};
  if (count <= 1) return subsets;
  std::mt19937_64 rng(seed);
  constexpr std::size_t kSizes[] = {0, 2, 4};
  // A bounded number of draws; small pools cannot fill every slot.
  for (int attempt = 0; attempt < count * 8 && static_cast<int>(subsets.size()) < count; ++attempt) {
    const std::size_t size = std::min(kSizes[static_cast<std::size_t>(attempt + 1) % 3], pool.size());
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(size);
    std::sort(idx.begin(), idx.end());
    std::vector<Demo> subset;
    for (auto i : idx) subset.push_back(pool[i]);
    if (std::find(subsets.begin(), subsets.end(), subset) == subsets.end()) {
      subsets.push_back(std::move(subset));
    }
  }
  return subsets;
}

// ----------------------------------------------------------------- search

SearchResult search(const PromptProgram& base, const std::vector<CaseRecord>& dev_cases,
                    const CaseObjective& objective, const OptimizationBudget& budget,
                    const std::vector<std::string>& instructions,
                    const std::vector<std::vector<Demo>>& demo_subsets, std::uint64_t seed) {
  if (dev_cases.empty()) throw ValidationError("search needs at least one dev case");
  if (instructions.empty() || demo_subsets.empty()) {
    throw ValidationError("search needs at least one instruction and one demo subset");
  }

  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    for (std::size_t d = 0; d < demo_subsets.size(); ++d) {
      if (i || d) cells.emplace_back(i, d);
    }
  }
  std::mt19937_64 rng(seed);
  std::shuffle(cells.begin(), cells.end(), rng);
  cells.insert(cells.begin(), {0, 0});
  if (static_cast<int>(cells.size()) > budget.max_trials) {
    cells.resize(static_cast<std::size_t>(budget.max_trials));
  }

  SearchResult result;
  result.best = base;
  std::optional<std::size_t> best_demos;
  for (std::size_t t = 0; t < cells.size(); ++t) {
    CandidateProgram cand{base, instructions[cells[t].first], demo_subsets[cells[t].second], {}};
    const PromptProgram program = cand.materialize();
    TrialRecord rec;
    rec.trial = static_cast<int>(t);
    rec.instruction_hash = sha256_hex(cand.instruction_variant).substr(0, 12);
    rec.demo_count = static_cast<int>(cand.demo_subset.size());

    double sum = 0.0;
    int errors = 0;
    for (const auto& c : dev_cases) {
      try {
        sum += std::clamp(objective(program, c), 0.0, 1.0);
      } catch (const std::exception& e) {
        ++errors;
        rec.error = e.what();
        result.failures.push_back("trial " + std::to_string(t) + " case " + c.case_id + ": " + e.what());
      }
    }
    if (errors == static_cast<int>(dev_cases.size())) {
      result.trials.push_back(rec);
      continue;
    }
    const double score = sum / static_cast<double>(dev_cases.size());
    rec.score = score;
    result.trials.push_back(rec);

    const bool better = result.best_trial < 0 || score > result.best_score + 1e-12 ||
                        (std::abs(score - result.best_score) <= 1e-12 &&
                         cand.demo_subset.size() < *best_demos);
    if (better) {
      result.best = program;
      result.best_score = score;
      result.best_trial = static_cast<int>(t);
      best_demos = cand.demo_subset.size();
    }
  }
  return result;
}

std::string trials_csv(const std::vector<TrialRecord>& trials) {
  std::ostringstream out;
  out << "trial,instruction_hash,demo_count,score\n";
  for (const auto& t : trials) {
    out << t.trial << ',' << t.instruction_hash << ',' << t.demo_count << ',';
    if (t.score) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", *t.score);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

// ----------------------------------------------------------------- objectives

double key_term_overlap(std::string_view predicted, std::string_view reference) {
  std::set<std::string> terms;
  for (auto& t : eval::tokenize(reference)) {
    if (t.size() >= 5) terms.insert(std::move(t));
  }
  if (terms.empty()) return 1.0;
  const auto pred_tokens = eval::tokenize(predicted);
  const std::set<std::string> pred(pred_tokens.begin(), pred_tokens.end());
  std::size_t hit = 0;
  for (const auto& t : terms) hit += pred.count(t);
  return static_cast<double>(hit) / static_cast<double>(terms.size());
}

double question_structure(std::string_view predicted, std::size_t word_limit) {
  static const std::set<std::string> kPronouns{"he",  "she",  "him",     "her",
                                               "his", "hers", "himself", "herself"};
  const std::string t = trim(predicted);
  int satisfied = 0;
  if (count_words(t) <= word_limit) ++satisfied;
  if (!t.empty() && t.back() == '?') ++satisfied;
  const auto tokens = eval::tokenize(t);
  bool specific = false;
  for (std::size_t i = 0; i < tokens.size() && !specific; ++i) {
    specific = kPronouns.count(tokens[i]) > 0 ||
               (tokens[i] == "the" && i + 1 < tokens.size() && tokens[i + 1] == "patient");
  }
  if (specific) ++satisfied;
  return satisfied / 3.0;
}

double composite_st1(double semantic, double key_terms, double structure) {
  return 0.60 * semantic + 0.25 * key_terms + 0.15 * structure;
}

ObjectiveScore objective_st1(const std::string& predicted, const std::string& reference,
                             const CaseRecord& c, const SemanticJudge& judge) {
  ObjectiveScore out;
  const double key_terms = key_term_overlap(predicted, reference);
  const double structure = question_structure(predicted);
  std::optional<double> semantic;
  if (judge) semantic = judge(predicted, reference, c);
  if (!semantic) {
    out.fallback = true;
    semantic = key_terms;
  }
  out.value = composite_st1(std::clamp(*semantic, 0.0, 1.0), key_terms, structure);
  return out;
}

double objective_st2(const std::set<int>& predicted_ids, const GoldAnnotations& gold) {
  auto m = eval::evidence_metrics({{"case", predicted_ids}}, {{"case", gold}});
  return m.strict_micro.f1;
}

ObjectiveScore objective_st3(const std::string& predicted, const std::string& reference,
                             const std::string& notes, const St3Judges& judges,
                             const St3Weights& weights) {
  ObjectiveScore out;
  const double lexical = eval::rouge_l(predicted, reference).f1;
  auto term = [&](const TextJudge& j) {
    std::optional<double> v;
    if (j) v = j(predicted, reference, notes);
    if (!v) {
      out.fallback = true;
      return lexical;
    }
    return std::clamp(*v, 0.0, 1.0);
  };
  const double faithfulness = term(judges.faithfulness);
  const double completeness = term(judges.completeness);
  const double coherence = term(judges.coherence);
  const double total = weights.faithfulness + weights.completeness + weights.lexical + weights.coherence;
  if (total <= 0.0) throw ValidationError("objective weights must sum to a positive value");
  out.value = (weights.faithfulness * faithfulness + weights.completeness * completeness +
               weights.lexical * lexical + weights.coherence * coherence) /
              total;
  return out;
}

double objective_st4(const std::vector<AlignmentLink>& predicted, const GoldAnnotations& gold) {
  std::set<LinkKey> pred;
  for (const auto& l : predicted) pred.insert(l.key());
  const auto gold_links = gold.link_pairs();
  if (pred.empty() && gold_links.empty()) return 1.0;
  auto m = eval::alignment_metrics({{"case", predicted}}, {{"case", gold}});
  return m.micro_f1;
}

// ----------------------------------------------------------------- judge

LlmJudge::LlmJudge(Gateway& gateway, std::string model_id, double temperature, int max_tokens)
    : gateway_(gateway), model_id_(std::move(model_id)), temperature_(temperature), max_tokens_(max_tokens) {}

std::optional<double> LlmJudge::parse_score(std::string_view raw) {
  std::string text = parse_labeled_field(raw, "score");
  static const std::regex number(R"([-+]?\d*\.?\d+(?:[eE][-+]?\d+)?)");
  std::smatch m;
  if (!std::regex_search(text, m, number)) return std::nullopt;
  double v = 0.0;
  try {
    v = std::stod(m[0].str());
  } catch (const std::exception&) {
    return std::nullopt;
  }
  if (!(v >= 0.0 && v <= 1.0)) return std::nullopt;
  return v;
}

std::optional<double> LlmJudge::rate(const std::string& stage, const std::string& rubric,
                                     const std::string& material, const std::string& seed_tag) const {
  ChatRequest req;
  req.model_id = model_id_;
  req.messages = {{Role::system,
                   "You are a strict clinical evaluator. " + rubric +
                       "\nReply with a single line `score: <number between 0 and 1>`."},
                  {Role::user, material}};
  req.temperature = temperature_;
  req.max_tokens = max_tokens_;
  req.seed_tag = seed_tag;
  req.stage = stage;
  try {
    return parse_score(gateway_.complete(req).content);
  } catch (const GatewayError&) {
    return std::nullopt;
  }
}

SemanticJudge LlmJudge::semantic() {
  return [this](const std::string& predicted, const std::string& reference, const CaseRecord& c) {
    return rate("judge.st1.semantic",
                "Rate how semantically equivalent the predicted clinician question is to the "
                "reference question: 1 means the same clinical information need, 0 means unrelated.",
                "reference: " + reference + "\n\npredicted: " + predicted,
                c.case_id + "/judge/st1/" + sha256_hex(predicted).substr(0, 16));
  };
}

St3Judges LlmJudge::answer_judges() {
  auto make = [this](std::string stage, std::string rubric) -> TextJudge {
    return [this, stage, rubric](const std::string& predicted, const std::string& reference,
                                 const std::string& notes) {
      return rate(stage, rubric,
                  "clinical_notes:\n" + notes + "\n\nreference_answer: " + reference +
                      "\n\npredicted_answer: " + predicted,
                  stage + "/" + sha256_hex(predicted + "\x1f" + notes).substr(0, 16));
    };
  };
  St3Judges j;
  j.faithfulness = make("judge.st3.faithfulness",
                        "Rate whether every claim in the predicted answer is supported by the "
                        "clinical notes (1 = fully faithful, 0 = unsupported).");
  j.completeness = make("judge.st3.completeness",
                        "Rate how completely the predicted answer covers the medical concepts of "
                        "the reference answer (1 = all concepts, 0 = none).");
  j.coherence = make("judge.st3.coherence",
                     "Rate the structure and professional clinical register of the predicted "
                     "answer (1 = coherent and professional, 0 = incoherent).");
  return j;
}

// ------------------------------------------------------------ orchestration

namespace {

std::map<std::string, std::string> base_inputs(const CaseRecord& c) {
  return {{"patient_narrative", c.patient_narrative},
          {"patient_question", c.patient_question},
          {"clinician_question", c.clinician_question.value_or("")},
          {"clinical_notes", render_note_excerpt(c)}};
}

std::string essential_listing(const CaseRecord& c) {
  std::string out;
  for (int id : c.gold->essential_ids()) {
    if (const auto* s = c.find_sentence(id)) {
      if (!out.empty()) out += '\n';
      out += std::to_string(id) + ": " + s->text;
    }
  }
  return out.empty() ? "(none identified)" : out;
}

std::vector<AlignmentLink> gold_links(const GoldAnnotations& gold) {
  std::vector<AlignmentLink> links;
  for (const auto& [a, n] : gold.link_pairs()) links.push_back({a, n, 1.0});
  return links;
}

}  // namespace

OptimizeOutcome optimize_subtask(Subtask subtask, const PromptProgram& base,
                                 const std::vector<CaseRecord>& dev_cases, RunContext& ctx,
                                 const OptimizationBudget& budget, std::uint64_t seed,
                                 std::size_t reasoning_pairs_per_case) {
  budget.validate();
  if (dev_cases.empty()) throw ValidationError("optimization needs at least one dev case");
  for (const auto& c : dev_cases) {
    const bool ok = subtask == Subtask::interpretation ? c.clinician_question.has_value()
                                                       : c.gold.has_value();
    if (!ok) throw ValidationError("dev case " + c.case_id + " lacks gold annotations");
  }

  std::vector<Demo> pool;
  switch (subtask) {
    case Subtask::interpretation:
      for (const auto& c : dev_cases) {
        pool.push_back({{{"patient_narrative", c.patient_narrative}, {"patient_question", c.patient_question}},
                        {{"clinician_question", *c.clinician_question}}});
      }
      break;
    case Subtask::evidence:
      pool = generate_reasoning_demos(dev_cases, programs::essential_reasoning(),
                                      programs::non_essential_reasoning(), ctx, reasoning_pairs_per_case);
      break;
    case Subtask::answer:
      for (const auto& c : dev_cases) {
        auto inputs = base_inputs(c);
        inputs["essential_sentences"] = essential_listing(c);
        pool.push_back({inputs, {{"answer", c.gold->reference_text()}}});
      }
      break;
    case Subtask::alignment:
      for (const auto& c : dev_cases) {
        if (c.gold->reference_answer.empty()) continue;
        auto inputs = base_inputs(c);
        inputs["answer_sentences"] = render_answer_sentences(c.gold->reference_answer);
        const auto links = gold_links(*c.gold);
        pool.push_back({inputs, {{"alignment", format_alignment(links, static_cast<int>(
                                                                            c.gold->reference_answer.size()))}}});
      }
      break;
  }

  OptimizeOutcome outcome;
  outcome.demo_pool_size = pool.size();
  outcome.instructions =
      propose_instructions(base, dev_cases, budget.num_instruction_candidates, ctx, budget.judge_temperature);
  const auto subsets = sample_demo_subsets(base.demos, pool, budget.num_demo_subsets, seed);

  LlmJudge judge(ctx.gateway, ctx.model_id, budget.judge_temperature);
  CaseObjective objective;
  switch (subtask) {
    case Subtask::interpretation: {
      auto semantic = judge.semantic();
      objective = [&ctx, semantic](const PromptProgram& p, const CaseRecord& c) {
        return objective_st1(run_subtask1(c, p, ctx), *c.clinician_question, c, semantic).value;
      };
      break;
    }
    case Subtask::evidence:
      objective = [&ctx](const PromptProgram& p, const CaseRecord& c) {
        return objective_st2(run_subtask2(c, p, ctx), *c.gold);
      };
      break;
    case Subtask::answer: {
      auto judges = judge.answer_judges();
      objective = [&ctx, judges](const PromptProgram& p, const CaseRecord& c) {
        AnswerPrograms progs;
        progs.answer = p;
        auto answer = run_subtask3(c, c.gold->essential_ids(), progs, ctx);
        return objective_st3(answer, c.gold->reference_text(), render_note_excerpt(c), judges).value;
      };
      break;
    }
    case Subtask::alignment:
      objective = [&ctx](const PromptProgram& p, const CaseRecord& c) {
        AlignmentPrograms progs;
        progs.align = p;
        return objective_st4(run_subtask4(c, progs, ctx), *c.gold);
      };
      break;
  }
  outcome.result = search(base, dev_cases, objective, budget, outcome.instructions, subsets, seed);
  return outcome;
}

}  // namespace gqa::opt
