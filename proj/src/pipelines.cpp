#include "gqa/pipelines.hpp"

#include <algorithm>
#include <cctype>

#include "gqa/evaluation.hpp"

namespace gqa {

using json = nlohmann::json;

// ---------------------------------------------------------------- config

void PipelineConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ValidationError(std::string(name) + " must be >= 1");
  };
  positive(R_st2, "R_st2");
  positive(R_st4, "R_st4");
  positive(candidates_st3, "candidates_st3");
  positive(max_tokens_st1, "max_tokens_st1");
  positive(max_tokens_other, "max_tokens_other");
  positive(word_limit_st1, "word_limit_st1");
  positive(word_limit_st3, "word_limit_st3");
  for (double t : {temp_st1, temp_st2, temp_st3, temp_st4}) {
    if (!(t >= 0.0 && t <= 2.0)) throw ValidationError("temperatures must lie in [0, 2]");
  }
  if (!(tau_c >= 0.0 && tau_c <= 1.0)) throw ValidationError("tau_c must lie in [0, 1]");
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  auto as_int = [&] {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size()) throw ValidationError(key + ": expected an integer, got '" + value + "'");
    return v;
  };
  auto as_double = [&] {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size()) throw ValidationError(key + ": expected a number, got '" + value + "'");
    return v;
  };
  if (key == "R_st2") R_st2 = as_int();
  else if (key == "R_st4") R_st4 = as_int();
  else if (key == "candidates_st3") candidates_st3 = as_int();
  else if (key == "temp_st1") temp_st1 = as_double();
  else if (key == "temp_st2") temp_st2 = as_double();
  else if (key == "temp_st3") temp_st3 = as_double();
  else if (key == "temp_st4") temp_st4 = as_double();
  else if (key == "tau_c") tau_c = as_double();
  else if (key == "max_tokens_st1") max_tokens_st1 = as_int();
  else if (key == "max_tokens_other") max_tokens_other = as_int();
  else if (key == "word_limit_st1") word_limit_st1 = as_int();
  else if (key == "word_limit_st3") word_limit_st3 = as_int();
  else if (key == "confidence_mean") {
    if (value == "emitting_runs") confidence_mean = consensus::ConfidenceMean::emitting_runs;
    else if (value == "all_runs") confidence_mean = consensus::ConfidenceMean::all_runs;
    else throw ValidationError("confidence_mean must be emitting_runs or all_runs");
  } else {
    throw ValidationError("unknown pipeline setting '" + key + "'");
  }
}

json PipelineConfig::to_json() const {
  return {{"R_st2", R_st2},
          {"R_st4", R_st4},
          {"candidates_st3", candidates_st3},
          {"temp_st1", temp_st1},
          {"temp_st2", temp_st2},
          {"temp_st3", temp_st3},
          {"temp_st4", temp_st4},
          {"tau_c", tau_c},
          {"max_tokens_st1", max_tokens_st1},
          {"max_tokens_other", max_tokens_other},
          {"word_limit_st1", word_limit_st1},
          {"word_limit_st3", word_limit_st3},
          {"confidence_mean",
           confidence_mean == consensus::ConfidenceMean::emitting_runs ? "emitting_runs" : "all_runs"}};
}

// ---------------------------------------------------------------- trace

void Trace::call(const std::string& stage, const std::string& seed_tag, const std::string& content) {
  std::lock_guard lock(mu_);
  calls_.push_back({{"stage", stage}, {"seed_tag", seed_tag}, {"output", content}});
}

void Trace::warn(const std::string& message) {
  std::lock_guard lock(mu_);
  warnings_.push_back(message);
}

void Trace::set(const std::string& key, json value) {
  std::lock_guard lock(mu_);
  extra_[key] = std::move(value);
}

std::map<std::string, int> Trace::call_counts() const {
  std::lock_guard lock(mu_);
  std::map<std::string, int> counts;
  for (const auto& c : calls_) ++counts[c["stage"].get<std::string>()];
  return counts;
}

json Trace::to_json() const {
  auto counts = call_counts();
  std::lock_guard lock(mu_);
  json out = extra_;
  out["calls"] = calls_;
  out["warnings"] = warnings_;
  out["ledger"] = counts;
  return out;
}

// ---------------------------------------------------------------- helpers

namespace {

std::vector<std::string> labels_of(const PromptProgram& p) {
  std::vector<std::string> labels{"reasoning"};
  for (const auto& f : p.output_fields) labels.push_back(f.name);
  return labels;
}

std::string field_of(const PromptProgram& p, const std::string& raw, const std::string& field) {
  auto labels = labels_of(p);
  return parse_labeled_field(raw, field, labels);
}

ChatRequest make_request(const RunContext& ctx, const PromptProgram& program,
                         const std::map<std::string, std::string>& inputs, double temperature,
                         int max_tokens, std::string seed_tag, std::string stage) {
  ChatRequest r;
  r.model_id = ctx.model_id;
  r.messages = render(program, inputs);
  r.temperature = temperature;
  r.max_tokens = max_tokens;
  r.seed_tag = std::move(seed_tag);
  r.stage = std::move(stage);
  return r;
}

void record(RunContext& ctx, const ChatRequest& req, const ChatResponse& resp) {
  if (ctx.trace) ctx.trace->call(req.stage, req.seed_tag, resp.content);
}

void warn(RunContext& ctx, const std::string& message) {
  if (ctx.trace) ctx.trace->warn(message);
}

std::vector<ChatResponse> run_batch(RunContext& ctx, const std::vector<ChatRequest>& requests) {
  auto responses = ctx.gateway.complete_many(requests, static_cast<int>(requests.size()));
  for (std::size_t i = 0; i < requests.size(); ++i) record(ctx, requests[i], responses[i]);
  return responses;
}

std::map<std::string, std::string> case_inputs(const CaseRecord& c) {
  return {{"patient_narrative", c.patient_narrative},
          {"patient_question", c.patient_question},
          {"clinician_question", c.clinician_question.value_or("")},
          {"clinical_notes", render_note_excerpt(c)}};
}

bool is_trailing_punct(char ch) {
  const auto c = static_cast<unsigned char>(ch);
  return c < 0x80 && std::ispunct(c) != 0;
}

std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    cur += text[i];
    const bool end_mark = text[i] == '.' || text[i] == '!' || text[i] == '?';
    if (end_mark && (i + 1 == text.size() || text[i + 1] == ' ')) {
      out.push_back(trim(cur));
      cur.clear();
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

}  // namespace

std::string enforce_question_format(std::string_view text, int limit) {
  auto words = split_words(text);
  if (static_cast<int>(words.size()) > limit) words.resize(static_cast<std::size_t>(limit));
  while (!words.empty()) {
    auto& last = words.back();
    while (!last.empty() && is_trailing_punct(last.back())) last.pop_back();
    if (!last.empty()) break;
    words.pop_back();
  }
  if (words.empty()) throw PipelineError("no usable question text in model output");
  words.back() += '?';
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::string enforce_answer_format(std::string_view text, int limit) {
  const std::string clean = eval::strip_citation_markers(text);
  const auto lim = static_cast<std::size_t>(limit);
  if (count_words(clean) <= lim) return clean;
  auto sentences = split_sentences(clean);
  auto total = [&] {
    std::size_t n = 0;
    for (const auto& s : sentences) n += count_words(s);
    return n;
  };
  while (sentences.size() > 1 && total() > lim) sentences.pop_back();
  std::string out;
  for (const auto& s : sentences) {
    if (!out.empty()) out += ' ';
    out += s;
  }
  if (count_words(out) > lim) {
    auto words = split_words(out);
    words.resize(lim);
    out.clear();
    for (const auto& w : words) {
      if (!out.empty()) out += ' ';
      out += w;
    }
  }
  return out;
}

// ---------------------------------------------------------------- subtask 1

std::string run_subtask1(const CaseRecord& c, const PromptProgram& program, RunContext& ctx) {
  std::map<std::string, std::string> inputs{{"patient_narrative", c.patient_narrative},
                                            {"patient_question", c.patient_question}};
  auto req = make_request(ctx, program, inputs, ctx.cfg.temp_st1, ctx.cfg.max_tokens_st1,
                          c.case_id + "/st1", stages::kInterpret);
  auto resp = ctx.gateway.complete(req);
  record(ctx, req, resp);
  const auto question = normalize_space(field_of(program, resp.content, "clinician_question"));
  if (question.empty()) throw PipelineError("empty question interpretation for case " + c.case_id);
  return enforce_question_format(question, ctx.cfg.word_limit_st1);
}

// ---------------------------------------------------------------- subtask 2

std::set<int> run_subtask2(const CaseRecord& c, const PromptProgram& program, RunContext& ctx) {
  const auto inputs = case_inputs(c);
  const auto ids = c.note_ids();
  std::vector<ChatRequest> requests;
  for (int r = 1; r <= ctx.cfg.R_st2; ++r) {
    requests.push_back(make_request(ctx, program, inputs, ctx.cfg.temp_st2, ctx.cfg.max_tokens_other,
                                    c.case_id + "/st2/run" + std::to_string(r), stages::kClassify));
  }
  auto responses = run_batch(ctx, requests);

  consensus::VoteTally<int> tally;
  int failed = 0;
  for (std::size_t r = 0; r < responses.size(); ++r) {
    try {
      auto parsed = parse_st2(field_of(program, responses[r].content, "verdicts"), ids);
      std::set<int> essential;
      for (const auto& v : parsed.verdicts) {
        if (v.label == Verdict::essential) essential.insert(v.note_id);
      }
      for (const auto& w : parsed.warnings) warn(ctx, "run " + std::to_string(r + 1) + ": " + w);
      tally.add_run(essential);
    } catch (const ParseError&) {
      ++failed;
      warn(ctx, "run " + std::to_string(r + 1) + ": unparseable classifier output, counted as no votes");
      tally.add_empty_run();
    }
  }
  if (failed == static_cast<int>(responses.size())) {
    throw PipelineError("no classifier run produced parseable output for case " + c.case_id);
  }
  if (ctx.trace) {
    json votes = json::object();
    for (const auto& [id, v] : tally.votes) votes[std::to_string(id)] = v;
    ctx.trace->set("votes", votes);
  }
  return consensus::majority_vote(tally);
}

std::vector<Demo> generate_reasoning_demos(const std::vector<CaseRecord>& cases,
                                           const PromptProgram& essential_program,
                                           const PromptProgram& non_essential_program, RunContext& ctx,
                                           std::size_t max_per_case) {
  std::vector<Demo> demos;
  for (const auto& c : cases) {
    if (!c.gold) throw ValidationError("reasoning demos need gold relevance labels, case " + c.case_id);
    const auto essential = c.gold->essential_ids();
    const auto base_inputs = case_inputs(c);
    std::size_t used = 0;
    for (const auto& s : c.note_sentences) {
      if (max_per_case && used >= max_per_case) break;
      ++used;
      const bool is_essential = essential.count(s.id) > 0;
      const auto& program = is_essential ? essential_program : non_essential_program;
      auto inputs = base_inputs;
      inputs.erase("clinical_notes");
      inputs["note_sentence"] = s.text;
      auto req = make_request(ctx, program, inputs, 0.3, ctx.cfg.max_tokens_other,
                              c.case_id + "/demo/" + std::to_string(s.id),
                              is_essential ? stages::kReasonEssential : stages::kReasonNonEssential);
      std::string reasoning;
      try {
        auto resp = ctx.gateway.complete(req);
        record(ctx, req, resp);
        reasoning = normalize_space(field_of(program, resp.content, "reasoning"));
      } catch (const GatewayError& e) {
        warn(ctx, "skipped demo for case " + c.case_id + " sentence " + std::to_string(s.id) + ": " + e.what());
        continue;
      }
      if (reasoning.empty()) {
        warn(ctx, "empty reasoning for case " + c.case_id + " sentence " + std::to_string(s.id));
        continue;
      }
      SentenceVerdict v;
      v.note_id = s.id;
      v.label = is_essential ? Verdict::essential : Verdict::irrelevant;
      v.score = is_essential ? 10 : 0;
      v.reasoning = reasoning;
      v.sentence = s.text;
      Demo d;
      d.inputs = base_inputs;
      d.inputs["clinical_notes"] = std::to_string(s.id) + ": " + s.text;
      d.outputs["verdicts"] = format_verdict(v);
      demos.push_back(std::move(d));
    }
  }
  return demos;
}

// ---------------------------------------------------------------- subtask 3

std::string run_subtask3(const CaseRecord& c, const std::set<int>& essential_ids,
                         const AnswerPrograms& programs, RunContext& ctx) {
  auto inputs = case_inputs(c);
  std::string essential_text;
  for (int id : essential_ids) {
    if (const auto* s = c.find_sentence(id)) {
      if (!essential_text.empty()) essential_text += '\n';
      essential_text += std::to_string(id) + ": " + s->text;
    }
  }
  inputs["essential_sentences"] = essential_text.empty() ? "(none identified)" : essential_text;

  std::vector<ChatRequest> requests;
  for (int k = 1; k <= ctx.cfg.candidates_st3; ++k) {
    requests.push_back(make_request(ctx, programs.answer, inputs, ctx.cfg.temp_st3,
                                    ctx.cfg.max_tokens_other,
                                    c.case_id + "/st3/cand" + std::to_string(k), stages::kAnswer));
  }
  auto responses = run_batch(ctx, requests);
  std::vector<std::string> candidates;
  for (const auto& r : responses) {
    auto text = eval::strip_citation_markers(field_of(programs.answer, r.content, "answer"));
    if (!text.empty()) candidates.push_back(std::move(text));
  }
  if (candidates.empty()) throw PipelineError("all answer candidates empty for case " + c.case_id);

  std::string listing;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (k) listing += '\n';
    listing += "candidate_" + std::to_string(k + 1) + ": " + candidates[k];
  }
  std::map<std::string, std::string> cons_inputs{{"patient_question", c.patient_question},
                                                 {"clinical_notes", inputs["clinical_notes"]},
                                                 {"candidate_answers", listing}};
  auto req = make_request(ctx, programs.consolidate, cons_inputs, ctx.cfg.temp_st3,
                          ctx.cfg.max_tokens_other, c.case_id + "/st3/consolidate",
                          stages::kConsolidate);
  auto resp = ctx.gateway.complete(req);
  record(ctx, req, resp);

  auto answer = eval::strip_citation_markers(field_of(programs.consolidate, resp.content, "answer"));
  if (answer.empty()) {
    warn(ctx, "empty consolidation output; falling back to the longest valid candidate");
    const auto limit = static_cast<std::size_t>(ctx.cfg.word_limit_st3);
    const std::string* best = nullptr;
    const std::string* longest = nullptr;
    for (const auto& cand : candidates) {
      if (!longest || cand.size() > longest->size()) longest = &cand;
      if (count_words(cand) <= limit && (!best || cand.size() > best->size())) best = &cand;
    }
    answer = best ? *best : *longest;
  }
  return enforce_answer_format(answer, ctx.cfg.word_limit_st3);
}

// ---------------------------------------------------------------- subtask 4

AlignmentResult run_subtask4_detailed(const CaseRecord& c, const AlignmentPrograms& programs,
                                      RunContext& ctx) {
  if (!c.gold || c.gold->reference_answer.empty()) {
    throw PipelineError("alignment needs reference answer sentences, case " + c.case_id);
  }
  const int answer_count = static_cast<int>(c.gold->reference_answer.size());
  const auto note_ids = c.note_ids();
  auto inputs = case_inputs(c);
  inputs["answer_sentences"] = render_answer_sentences(c.gold->reference_answer);
  const int runs = ctx.cfg.R_st4;

  struct Stage {
    const PromptProgram& program;
    const std::string& label;
    const char* tag;
    const char* input_field;  // field carrying the previous stage's alignment
  };
  const Stage pipeline[] = {{programs.align, stages::kAlign, "A", nullptr},
                            {programs.reflect, stages::kReflect, "B", "initial_alignment"},
                            {programs.verify, stages::kVerify, "C", "reflected_alignment"}};

  std::vector<std::string> carried(static_cast<std::size_t>(runs));
  std::vector<std::optional<std::vector<AlignmentLink>>> final_links(static_cast<std::size_t>(runs));
  for (const auto& stage : pipeline) {
    std::vector<ChatRequest> requests;
    for (int r = 0; r < runs; ++r) {
      auto stage_inputs = inputs;
      if (stage.input_field) stage_inputs[stage.input_field] = carried[static_cast<std::size_t>(r)];
      requests.push_back(make_request(
          ctx, stage.program, stage_inputs, ctx.cfg.temp_st4, ctx.cfg.max_tokens_other,
          c.case_id + "/st4/run" + std::to_string(r + 1) + "/" + stage.tag, stage.label));
    }
    auto responses = run_batch(ctx, requests);
    for (int r = 0; r < runs; ++r) {
      const auto idx = static_cast<std::size_t>(r);
      const auto text = field_of(stage.program, responses[idx].content, "alignment");
      try {
        auto parsed = parse_st4(text, answer_count, note_ids);
        for (const auto& w : parsed.warnings) {
          warn(ctx, "run " + std::to_string(r + 1) + " stage " + stage.tag + ": " + w);
        }
        carried[idx] = format_alignment(parsed.links, answer_count);
        final_links[idx] = std::move(parsed.links);
      } catch (const ParseError&) {
        warn(ctx, "run " + std::to_string(r + 1) + " stage " + stage.tag + ": unparseable alignment");
        carried[idx] = text;
        final_links[idx].reset();
      }
    }
  }

  std::vector<std::vector<AlignmentLink>> per_run;
  int failed = 0;
  for (auto& links : final_links) {
    if (!links) ++failed;
    per_run.push_back(links.value_or(std::vector<AlignmentLink>{}));
  }
  if (failed == runs) {
    throw PipelineError("no alignment run produced parseable verified output for case " + c.case_id);
  }
  const auto tally = consensus::tally_links(per_run);
  AlignmentResult result;
  result.decisions = consensus::aggregate_links(tally, ctx.cfg.tau_c, ctx.cfg.confidence_mean);
  result.links = consensus::retained_links(result.decisions);
  if (ctx.trace) {
    json decisions = json::array();
    for (const auto& d : result.decisions) {
      decisions.push_back({{"answer_id", d.link.answer_id},
                           {"note_id", d.link.note_id},
                           {"mean_confidence", d.link.confidence},
                           {"votes", d.votes},
                           {"retained", d.retained}});
    }
    ctx.trace->set("link_decisions", decisions);
  }
  return result;
}

std::vector<AlignmentLink> run_subtask4(const CaseRecord& c, const AlignmentPrograms& programs,
                                        RunContext& ctx) {
  return run_subtask4_detailed(c, programs, ctx).links;
}

}  // namespace gqa
