#include "gqa/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <mutex>
#include <sstream>
#include <thread>

#include "gqa/evaluation.hpp"
#include "gqa/gateway.hpp"
#include "gqa/optimizer.hpp"
#include "gqa/pipelines.hpp"
#include "gqa/prompts.hpp"

namespace gqa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
  std::string backend = "remote";
  std::string script_dir;
  std::string cache_dir = "llm_cache";
  bool no_cache = false;
  std::string config_path;
  std::vector<std::string> sets;
  std::string model;
  int jobs = 0;
  std::string programs_dir = "programs";
  std::string runs_dir = "runs";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--backend", o.backend, "Chat backend")
      ->check(CLI::IsMember({"remote", "scripted", "cache-only"}));
  cmd->add_option("--script", o.script_dir, "Directory of <stage>.json reply queues (scripted backend)");
  cmd->add_option("--cache-dir", o.cache_dir, "Response cache directory");
  cmd->add_flag("--no-cache", o.no_cache, "Disable the response cache");
  cmd->add_option("--config", o.config_path, "key = value pipeline settings file");
  cmd->add_option("--set", o.sets, "Override one setting, KEY=VALUE");
  cmd->add_option("--model", o.model, "Model id");
  cmd->add_option("--jobs", o.jobs, "Concurrent cases (default: number of processors)");
  cmd->add_option("--programs", o.programs_dir, "Directory of <program>.json overrides");
  cmd->add_option("--runs-dir", o.runs_dir, "Provenance output directory");
}

struct Environment {
  std::unique_ptr<Gateway> gateway;
  PipelineConfig cfg;
  std::string model_id;
  int jobs = 1;
};

Environment make_environment(const CommonOptions& o) {
  Environment env;
  std::string config_model;
  if (!o.config_path.empty()) {
    for (const auto& [k, v] : parse_config(read_file(o.config_path))) {
      if (k == "model") config_model = v;
      else env.cfg.set(k, v);
    }
  }
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects KEY=VALUE, got '" + kv + "'");
    const std::string key = trim(kv.substr(0, eq));
    const std::string value = trim(kv.substr(eq + 1));
    if (key == "model") config_model = value;
    else env.cfg.set(key, value);
  }
  env.cfg.validate();

  const char* env_model = std::getenv("LLM_MODEL");
  if (!o.model.empty()) env.model_id = o.model;
  else if (env_model && *env_model) env.model_id = env_model;
  else if (!config_model.empty()) env.model_id = config_model;
  else env.model_id = "gpt-4.1";

  std::shared_ptr<ResponseCache> cache;
  if (!o.no_cache) cache = std::make_shared<ResponseCache>(o.cache_dir);
  std::shared_ptr<ChatBackend> backend;
  if (o.backend == "scripted") {
    if (o.script_dir.empty()) throw ValidationError("--backend scripted requires --script <dir>");
    backend = ScriptedBackend::from_directory(o.script_dir);
  } else if (o.backend == "cache-only") {
    if (!cache) throw ValidationError("--backend cache-only cannot be combined with --no-cache");
    backend = std::make_shared<NullBackend>();
  } else {
    backend = std::make_shared<RemoteBackend>(RemoteSettings::from_env());
  }
  env.gateway = std::make_unique<Gateway>(backend, cache);

  env.jobs = o.jobs > 0 ? o.jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  // Scripted queues are consumed in request order, so cases must run one at a time.
  if (o.backend == "scripted") env.jobs = 1;
  return env;
}

std::map<std::string, PromptProgram> load_programs(const fs::path& dir) {
  auto programs = programs::defaults();
  for (auto& [name, program] : programs) {
    const fs::path p = dir / (name + ".json");
    if (!fs::exists(p)) continue;
    auto loaded = load_program(p);
    if (loaded.name != name) {
      throw ValidationError(p.string() + " holds program '" + loaded.name + "', expected '" + name + "'");
    }
    program = std::move(loaded);
  }
  return programs;
}

std::vector<std::string> programs_for(Subtask s) {
  switch (s) {
    case Subtask::interpretation: return {std::string(programs::kInterpret)};
    case Subtask::evidence: return {std::string(programs::kClassify)};
    case Subtask::answer: return {std::string(programs::kAnswer), std::string(programs::kConsolidate)};
    case Subtask::alignment:
      return {std::string(programs::kAlign), std::string(programs::kReflect), std::string(programs::kVerify)};
  }
  return {};
}

std::string optimizable_program(Subtask s) { return programs_for(s).front(); }

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string safe_dirname(std::string id) {
  for (char& c : id) {
    if (c == '/' || c == '\\' || c == '\0') c = '_';
  }
  if (id.empty() || id == "." || id == "..") id = "_" + id;
  return id;
}

json ledger_json(const CallLedger& ledger) {
  json out;
  out["total"] = ledger.total();
  out["by_stage"] = ledger.counts();
  out["served_by"] = {{"remote", ledger.served_by(BackendKind::remote)},
                      {"scripted", ledger.served_by(BackendKind::scripted)},
                      {"cache", ledger.served_by(BackendKind::cache)}};
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

// ------------------------------------------------------------------- run

struct RunOptions {
  int subtask = 0;
  std::string cases_path;
  std::string out_path;
  std::string grounding = "gold";
};

int cmd_run(const CommonOptions& common, const RunOptions& ro, std::ostream& out, std::ostream& err) {
  const Subtask subtask = subtask_from_int(ro.subtask);
  const auto cases = load_cases(ro.cases_path);
  auto env = make_environment(common);
  const auto programs = load_programs(common.programs_dir);

  std::map<std::string, std::set<int>> grounding;
  if (subtask == Subtask::answer && ro.grounding != "gold") {
    for (const auto& b : load_submission(ro.grounding, Subtask::evidence)) {
      grounding[b.case_id] = *b.st2_essential_ids;
    }
  }

  json hashes = json::object();
  for (const auto& name : programs_for(subtask)) hashes[name] = program_hash(programs.at(name));

  std::vector<std::optional<PredictionBundle>> results(cases.size());
  std::vector<std::string> failures(cases.size());
  parallel_for(cases.size(), env.jobs, [&](std::size_t i) {
    const auto& c = cases[i];
    Trace trace;
    RunContext ctx{*env.gateway, env.cfg, env.model_id, &trace};
    json meta;
    meta["case_id"] = c.case_id;
    meta["subtask"] = ro.subtask;
    meta["model"] = env.model_id;
    meta["config"] = env.cfg.to_json();
    meta["program_hashes"] = hashes;
    try {
      PredictionBundle b;
      b.case_id = c.case_id;
      switch (subtask) {
        case Subtask::interpretation:
          b.st1_question = run_subtask1(c, programs.at(std::string(programs::kInterpret)), ctx);
          break;
        case Subtask::evidence:
          b.st2_essential_ids = run_subtask2(c, programs.at(std::string(programs::kClassify)), ctx);
          break;
        case Subtask::answer: {
          std::set<int> essential;
          if (ro.grounding == "gold") {
            if (!c.gold) throw ValidationError("case " + c.case_id + " has no gold relevance for --grounding gold");
            essential = c.gold->essential_ids();
          } else {
            auto it = grounding.find(c.case_id);
            if (it == grounding.end()) throw ValidationError("case " + c.case_id + " missing from grounding file");
            essential = it->second;
          }
          meta["grounding"] = {{"source", ro.grounding}, {"essential_ids", essential}};
          AnswerPrograms ap{programs.at(std::string(programs::kAnswer)),
                            programs.at(std::string(programs::kConsolidate))};
          b.st3_answer = run_subtask3(c, essential, ap, ctx);
          break;
        }
        case Subtask::alignment: {
          AlignmentPrograms ap{programs.at(std::string(programs::kAlign)),
                               programs.at(std::string(programs::kReflect)),
                               programs.at(std::string(programs::kVerify))};
          b.st4_links = run_subtask4(c, ap, ctx);
          break;
        }
      }
      results[i] = std::move(b);
      meta["status"] = "ok";
    } catch (const std::exception& e) {
      failures[i] = e.what();
      meta["status"] = "error";
      meta["error"] = e.what();
    }
    meta["trace"] = trace.to_json();
    write_file_atomic(fs::path(common.runs_dir) / safe_dirname(c.case_id) /
                          ("st" + std::to_string(ro.subtask) + ".meta"),
                      meta.dump(2) + "\n");
  });

  std::vector<PredictionBundle> ok;
  json failed = json::array();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (results[i]) {
      ok.push_back(std::move(*results[i]));
    } else {
      err << "case " << cases[i].case_id << ": " << failures[i] << "\n";
      failed.push_back(cases[i].case_id);
    }
  }
  write_submission(ok, subtask, ro.out_path);

  json manifest;
  manifest["command"] = "run";
  manifest["subtask"] = ro.subtask;
  manifest["dataset"] = ro.cases_path;
  manifest["submission"] = ro.out_path;
  manifest["backend"] = common.backend;
  manifest["cache_dir"] = common.no_cache ? json(nullptr) : json(common.cache_dir);
  manifest["model"] = env.model_id;
  manifest["config"] = env.cfg.to_json();
  manifest["program_hashes"] = hashes;
  manifest["timestamp"] = utc_timestamp();
  manifest["ledger"] = ledger_json(env.gateway->ledger());
  manifest["cases_ok"] = ok.size();
  manifest["cases_failed"] = failed;
  write_file_atomic(fs::path(common.runs_dir) / ("manifest.st" + std::to_string(ro.subtask) + ".json"),
                    manifest.dump(2) + "\n");

  out << "wrote " << ok.size() << " of " << cases.size() << " predictions to " << ro.out_path << "\n";
  if (failed.empty()) return kExitOk;
  return ok.empty() ? kExitFailure : kExitPartial;
}

// -------------------------------------------------------------- optimize

struct OptimizeOptions {
  int subtask = 0;
  std::string dev_path;
  std::string out_path;
  std::string trials_path;
  opt::OptimizationBudget budget;
  std::uint64_t seed = 0;
  std::size_t reasoning_pairs = 0;
};

int cmd_optimize(const CommonOptions& common, const OptimizeOptions& oo, std::ostream& out,
                 std::ostream& err) {
  const Subtask subtask = subtask_from_int(oo.subtask);
  oo.budget.validate();
  const auto dev = load_cases(oo.dev_path);
  auto env = make_environment(common);
  const auto programs = load_programs(common.programs_dir);
  const auto name = optimizable_program(subtask);

  RunContext ctx{*env.gateway, env.cfg, env.model_id, nullptr};
  auto outcome = opt::optimize_subtask(subtask, programs.at(name), dev, ctx, oo.budget, oo.seed,
                                       oo.reasoning_pairs);
  const auto& result = outcome.result;

  const fs::path program_path =
      oo.out_path.empty() ? fs::path(common.programs_dir) / (name + ".json") : fs::path(oo.out_path);
  const fs::path trials_path = oo.trials_path.empty()
                                   ? fs::path(common.programs_dir) / ("st" + std::to_string(oo.subtask) + ".trials.csv")
                                   : fs::path(oo.trials_path);
  save_program(result.best, program_path);
  write_file_atomic(trials_path, opt::trials_csv(result.trials));

  json manifest;
  manifest["command"] = "optimize";
  manifest["subtask"] = oo.subtask;
  manifest["dataset"] = oo.dev_path;
  manifest["backend"] = common.backend;
  manifest["model"] = env.model_id;
  manifest["config"] = env.cfg.to_json();
  manifest["budget"] = {{"num_instruction_candidates", oo.budget.num_instruction_candidates},
                        {"num_demo_subsets", oo.budget.num_demo_subsets},
                        {"max_trials", oo.budget.max_trials},
                        {"judge_temperature", oo.budget.judge_temperature},
                        {"seed", oo.seed}};
  manifest["program_hashes"] = {{name, program_hash(result.best)}};
  manifest["best_trial"] = result.best_trial;
  manifest["best_score"] = result.best_score;
  manifest["timestamp"] = utc_timestamp();
  manifest["ledger"] = ledger_json(env.gateway->ledger());
  write_file_atomic(fs::path(common.runs_dir) / ("manifest.optimize.st" + std::to_string(oo.subtask) + ".json"),
                    manifest.dump(2) + "\n");

  for (const auto& f : result.failures) err << f << "\n";
  if (result.best_trial < 0) {
    err << "every trial failed; base program kept\n";
    return kExitFailure;
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", result.best_score);
  out << "best score: " << buf << "\n";
  out << "best trial: " << result.best_trial << " of " << result.trials.size() << "\n";
  out << "program written to " << program_path.string() << "\n";
  return result.failures.empty() ? kExitOk : kExitPartial;
}

// -------------------------------------------------------------- evaluate

struct EvaluateOptions {
  int subtask = 0;
  std::string submission_path;
  std::string gold_path;
  std::string report_path;
};

int cmd_evaluate(const EvaluateOptions& eo, std::ostream& out) {
  const Subtask subtask = subtask_from_int(eo.subtask);
  const auto submission = load_submission(eo.submission_path, subtask);
  const auto gold = load_cases(eo.gold_path);
  const auto r = evaluation_report(subtask, submission, gold);
  out << r.text;
  if (!eo.report_path.empty()) write_file_atomic(eo.report_path, r.report.dump(2) + "\n");
  return kExitOk;
}

// -------------------------------------------------------------- validate

struct ValidateOptions {
  std::string cases_path;
  std::string submission_path;
  int subtask = 0;
};

int cmd_validate(const ValidateOptions& vo, std::ostream& out, std::ostream& err) {
  if (vo.cases_path.empty() && vo.submission_path.empty()) {
    throw ValidationError("validate needs --cases and/or --submission");
  }
  int problems = 0;
  if (!vo.cases_path.empty()) {
    const auto cases = load_cases(vo.cases_path);
    out << vo.cases_path << ": " << cases.size() << " valid cases\n";
  }
  if (!vo.submission_path.empty()) {
    const Subtask subtask = subtask_from_int(vo.subtask);
    const auto bundles = load_submission(vo.submission_path, subtask);
    for (const auto& b : bundles) {
      std::vector<eval::Violation> v;
      if (subtask == Subtask::interpretation) v = eval::validate_output(*b.st1_question, subtask);
      if (subtask == Subtask::answer) v = eval::validate_output(*b.st3_answer, subtask);
      for (auto x : v) {
        err << "case " << b.case_id << ": " << eval::to_string(x) << "\n";
        ++problems;
      }
    }
    out << vo.submission_path << ": " << bundles.size() << " entries, " << problems << " violations\n";
  }
  return problems ? kExitFailure : kExitOk;
}

}  // namespace

// ---------------------------------------------------------------- report

Report evaluation_report(Subtask subtask, const std::vector<PredictionBundle>& submission,
                         const std::vector<CaseRecord>& gold_cases) {
  std::map<std::string, const CaseRecord*> gold;
  for (const auto& c : gold_cases) gold[c.case_id] = &c;
  std::set<std::string> sub_ids;
  for (const auto& b : submission) sub_ids.insert(b.case_id);

  std::vector<std::string> only_sub;
  std::vector<std::string> only_gold;
  for (const auto& id : sub_ids) {
    if (!gold.count(id)) only_sub.push_back(id);
  }
  for (const auto& [id, c] : gold) {
    if (!sub_ids.count(id)) only_gold.push_back(id);
  }
  if (!only_sub.empty() || !only_gold.empty()) {
    std::string msg = "case ids do not match;";
    if (!only_sub.empty()) {
      msg += " only in submission:";
      for (const auto& id : only_sub) msg += " " + id;
      msg += ";";
    }
    if (!only_gold.empty()) {
      msg += " only in gold:";
      for (const auto& id : only_gold) msg += " " + id;
    }
    throw ValidationError(msg);
  }

  auto need_gold = [&](const std::string& id) -> const GoldAnnotations& {
    const auto* c = gold.at(id);
    if (!c->gold) throw ValidationError("case " + id + " has no gold annotations");
    return *c->gold;
  };

  json report;
  report["subtask"] = to_int(subtask);
  report["cases"] = submission.size();
  std::vector<std::pair<std::string, std::string>> rows;
  auto put = [&](const std::string& name, double v) {
    report["metrics"][name] = v;
    rows.emplace_back(name, fmt(v));
  };
  auto not_computed = [&](const std::string& name) {
    report["metrics"][name] = "not computed";
    rows.emplace_back(name, "not computed");
  };
  std::vector<std::string> notes;

  switch (subtask) {
    case Subtask::interpretation:
    case Subtask::answer: {
      double rouge = 0.0;
      double bleu = 0.0;
      std::size_t valid = 0;
      for (const auto& b : submission) {
        std::string pred;
        std::string ref;
        if (subtask == Subtask::interpretation) {
          const auto* c = gold.at(b.case_id);
          if (!c->clinician_question) throw ValidationError("case " + b.case_id + " has no reference clinician_question");
          pred = *b.st1_question;
          ref = *c->clinician_question;
        } else {
          pred = *b.st3_answer;
          ref = need_gold(b.case_id).reference_text();
        }
        rouge += eval::rouge_l(pred, ref).f1;
        bleu += eval::bleu(pred, {ref});
        valid += eval::validate_output(pred, subtask).empty();
      }
      const double n = submission.empty() ? 1.0 : static_cast<double>(submission.size());
      not_computed("Overall");
      put("BLEU", bleu / n);
      put("ROUGE-L", rouge / n);
      if (subtask == Subtask::interpretation) {
        not_computed("SARI");
        not_computed("BERTScore");
      } else {
        not_computed("BERTScore");
        not_computed("AlignScore");
        not_computed("MEDCON");
      }
      put("Format valid", static_cast<double>(valid) / n);
      notes.push_back("BLEU and ROUGE-L are per-case means over lowercase alphanumeric tokens.");
      notes.push_back("Columns marked 'not computed' need external models.");
      break;
    }
    case Subtask::evidence: {
      std::map<std::string, std::set<int>> preds;
      std::map<std::string, GoldAnnotations> golds;
      for (const auto& b : submission) {
        preds[b.case_id] = *b.st2_essential_ids;
        golds[b.case_id] = need_gold(b.case_id);
      }
      const auto m = eval::evidence_metrics(preds, golds);
      put("Overall", m.strict_micro.f1);
      auto prf = [&](const std::string& prefix, const eval::PRF& v) {
        put(prefix + " P", v.precision);
        put(prefix + " R", v.recall);
        put(prefix + " F1", v.f1);
      };
      prf("Strict Micro", m.strict_micro);
      prf("Strict Macro", m.strict_macro);
      prf("Lenient Micro", m.lenient_micro);
      prf("Lenient Macro", m.lenient_macro);
      notes.push_back("Overall = Strict Micro F1. Recall uses essential sentences for both variants.");
      notes.push_back("Macro: empty prediction has precision 1 only when the case has no essential sentence; "
                      "a case without essential sentences has recall 1.");
      break;
    }
    case Subtask::alignment: {
      std::map<std::string, std::vector<AlignmentLink>> preds;
      std::map<std::string, GoldAnnotations> golds;
      for (const auto& b : submission) {
        preds[b.case_id] = *b.st4_links;
        golds[b.case_id] = need_gold(b.case_id);
      }
      const auto m = eval::alignment_metrics(preds, golds);
      put("Overall", m.micro_f1);
      put("Micro P", m.micro_precision);
      put("Micro R", m.micro_recall);
      put("Micro F1", m.micro_f1);
      notes.push_back("Overall = Micro F1 over (answer_id, note_id) pairs; confidences ignored.");
      notes.push_back("An empty denominator yields 0.");
      break;
    }
  }
  report["notes"] = notes;

  std::size_t width = 0;
  for (const auto& [k, v] : rows) width = std::max(width, k.size());
  std::ostringstream text;
  text << "Subtask " << to_int(subtask) << " (" << submission.size() << " cases)\n";
  for (const auto& [k, v] : rows) text << "  " << k << std::string(width - k.size() + 2, ' ') << v << "\n";
  for (const auto& n : notes) text << "note: " << n << "\n";
  return {report, text.str()};
}

std::map<std::string, std::string> parse_config(std::string_view text) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty()) throw ParseError("config line " + std::to_string(lineno) + ": empty key");
    out[key] = value;
  }
  return out;
}

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Grounded clinical QA pipelines, optimizer and scorer", "gqa"};
  app.require_subcommand(1);

  CommonOptions common;
  RunOptions ro;
  OptimizeOptions oo;
  EvaluateOptions eo;
  ValidateOptions vo;

  auto* run = app.add_subcommand("run", "Run one subtask over a case file");
  add_common(run, common);
  run->add_option("--subtask", ro.subtask, "Subtask 1-4")->required();
  run->add_option("--cases", ro.cases_path, "Case file")->required();
  run->add_option("--out", ro.out_path, "Submission output path")->required();
  run->add_option("--grounding", ro.grounding, "Subtask 3 essential sentences: 'gold' or a subtask 2 submission");

  auto* optimize = app.add_subcommand("optimize", "Search prompt variants on dev cases");
  add_common(optimize, common);
  optimize->add_option("--subtask", oo.subtask, "Subtask 1-4")->required();
  optimize->add_option("--dev", oo.dev_path, "Dev case file with gold")->required();
  optimize->add_option("--out", oo.out_path, "Optimized program path");
  optimize->add_option("--trials", oo.trials_path, "trials.csv path");
  optimize->add_option("--instructions", oo.budget.num_instruction_candidates, "Instruction candidates");
  optimize->add_option("--demo-subsets", oo.budget.num_demo_subsets, "Demo subsets");
  optimize->add_option("--max-trials", oo.budget.max_trials, "Trial budget");
  optimize->add_option("--judge-temperature", oo.budget.judge_temperature, "Judge and proposer temperature");
  optimize->add_option("--seed", oo.seed, "Search seed");
  optimize->add_option("--reasoning-pairs", oo.reasoning_pairs, "Subtask 2 demo pairs per case (0 = all)");

  auto* evaluate = app.add_subcommand("evaluate", "Score a submission against gold");
  evaluate->add_option("--subtask", eo.subtask, "Subtask 1-4")->required();
  evaluate->add_option("--submission", eo.submission_path, "Submission file")->required();
  evaluate->add_option("--gold", eo.gold_path, "Gold case file")->required();
  evaluate->add_option("--report", eo.report_path, "Write the JSON report here");

  auto* validate = app.add_subcommand("validate", "Check a case file or submission");
  validate->add_option("--cases", vo.cases_path, "Case file");
  validate->add_option("--submission", vo.submission_path, "Submission file");
  validate->add_option("--subtask", vo.subtask, "Subtask of the submission");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitFailure;
  }

  try {
    if (*run) return cmd_run(common, ro, out, err);
    if (*optimize) return cmd_optimize(common, oo, out, err);
    if (*evaluate) return cmd_evaluate(eo, out);
    if (*validate) return cmd_validate(vo, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    if (dynamic_cast<const ValidationError*>(&e) && std::string(e.what()).find("subtask") != std::string::npos) {
      err << app.help();
    }
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace gqa::cli
