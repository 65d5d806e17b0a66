#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include <json.hpp>

#include "gqa/cli.hpp"
#include "test_support.hpp"

using namespace gqa;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::cli_main(args, out, err);
  return {code, out.str(), err.str()};
}

void write_script(const test::TempDir& dir, const std::string& stage, const std::vector<std::string>& replies) {
  write_file_atomic(dir.path() / "script" / (stage + ".json"), json(replies).dump());
}

}  // namespace

TEST(Cli, RunSubtask2WithFixtureScripts) {
  test::TempDir dir;
  auto r = run({"run", "--subtask", "2", "--backend", "scripted", "--script", test::fixture_path("st2.scripts"),
                "--cases", test::fixture_path("cases2.json"), "--out", dir / "st2.json", "--no-cache",
                "--runs-dir", dir / "runs"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto sub = load_submission(dir / "st2.json", Subtask::evidence);
  ASSERT_EQ(sub.size(), 2u);
  EXPECT_EQ(*sub[0].st2_essential_ids, (std::set<int>{2, 5}));
  EXPECT_EQ(*sub[1].st2_essential_ids, (std::set<int>{1, 3}));

  auto meta = json::parse(read_file(dir.path() / "runs" / "c1" / "st2.meta"));
  EXPECT_EQ(meta["status"], "ok");
  EXPECT_EQ(meta["trace"]["calls"].size(), 5u);
  auto manifest = json::parse(read_file(dir.path() / "runs" / "manifest.st2.json"));
  EXPECT_EQ(manifest["ledger"]["total"], 10);
  EXPECT_EQ(manifest["ledger"]["served_by"]["scripted"], 10);
  EXPECT_TRUE(manifest["program_hashes"].contains("st2.classify"));
  EXPECT_EQ(manifest["config"]["R_st2"], 5);
}

TEST(Cli, UnknownSubtaskIsUsageError) {
  test::TempDir dir;
  auto r = run({"run", "--subtask", "5", "--cases", test::fixture_path("cases2.json"), "--out", dir / "x.json",
                "--backend", "scripted", "--script", dir.path().string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("subtask"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST(Cli, BadFlagsExitOne) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"run", "--backend", "carrier-pigeon"}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, PartialSuccessExitsTwo) {
  test::TempDir dir;
  write_script(dir, "st1.interpret", {"clinician_question: Why was he given aspirin?", "Why was she confused?"});
  auto r = run({"run", "--subtask", "1", "--backend", "scripted", "--script", dir / "script", "--cases",
                test::fixture_path("cases3.json"), "--out", dir / "st1.json", "--no-cache", "--runs-dir",
                dir / "runs"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("case c3"), std::string::npos);
  EXPECT_EQ(load_submission(dir / "st1.json", Subtask::interpretation).size(), 2u);
  auto meta = json::parse(read_file(dir.path() / "runs" / "c3" / "st1.meta"));
  EXPECT_EQ(meta["status"], "error");
}

TEST(Cli, UnusableDatasetExitsOne) {
  test::TempDir dir;
  write_file_atomic(dir.path() / "bad.json", "[{\"case_id\": 1}]");
  auto r = run({"run", "--subtask", "1", "--backend", "cache-only", "--cache-dir", dir / "cache", "--cases",
                dir / "bad.json", "--out", dir / "o.json"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("case_id"), std::string::npos);
  EXPECT_EQ(run({"run", "--subtask", "1", "--backend", "cache-only", "--no-cache", "--cases",
                 test::fixture_path("cases2.json"), "--out", dir / "o.json"})
                .code,
            1);
}

TEST(Cli, ConfigPrecedence) {
  test::TempDir dir;
  write_file_atomic(dir.path() / "pipeline.conf", "# settings\nR_st2 = 3\ntemp_st2 = 0.5\nmodel = from-config\n");
  write_script(dir, "st2.classify", std::vector<std::string>(8, "1: x -> essential -> 9 -> y"));
  auto base = std::vector<std::string>{"run", "--subtask", "2", "--backend", "scripted", "--script", dir / "script",
                                       "--cases", test::fixture_path("cases2.json"), "--out", dir / "o.json",
                                       "--no-cache", "--runs-dir", dir / "runs", "--config", dir / "pipeline.conf"};
  ::unsetenv("LLM_MODEL");
  auto args = base;
  args.insert(args.end(), {"--set", "R_st2=4"});
  ASSERT_EQ(run(args).code, 0);
  auto m = json::parse(read_file(dir.path() / "runs" / "manifest.st2.json"));
  EXPECT_EQ(m["config"]["R_st2"], 4);
  EXPECT_DOUBLE_EQ(m["config"]["temp_st2"].get<double>(), 0.5);
  EXPECT_EQ(m["model"], "from-config");
  EXPECT_EQ(m["ledger"]["total"], 8);

  write_script(dir, "st2.classify", std::vector<std::string>(6, "1: x -> essential -> 9 -> y"));
  ::setenv("LLM_MODEL", "from-env", 1);
  ASSERT_EQ(run(base).code, 0);
  m = json::parse(read_file(dir.path() / "runs" / "manifest.st2.json"));
  EXPECT_EQ(m["model"], "from-env");

  write_script(dir, "st2.classify", std::vector<std::string>(6, "1: x -> essential -> 9 -> y"));
  args = base;
  args.insert(args.end(), {"--model", "from-flag"});
  ASSERT_EQ(run(args).code, 0);
  m = json::parse(read_file(dir.path() / "runs" / "manifest.st2.json"));
  EXPECT_EQ(m["model"], "from-flag");
  ::unsetenv("LLM_MODEL");

  write_file_atomic(dir.path() / "bad.conf", "R_st2 = many\n");
  args = base;
  args.back() = dir / "bad.conf";
  EXPECT_EQ(run(args).code, 1);
}

TEST(Cli, ParseConfig) {
  auto kv = cli::parse_config("[pipeline]\na = 1  # note\nb = \"x y\"\n\n");
  EXPECT_EQ(kv.at("a"), "1");
  EXPECT_EQ(kv.at("b"), "x y");
  EXPECT_THROW(cli::parse_config("novalue"), ParseError);
}

TEST(Cli, OptimizeSingleTrialKeepsBase) {
  test::TempDir dir;
  write_script(dir, "st2.classify", {"1: x -> essential -> 9 -> y", "1: x -> essential -> 9 -> y",
                                     "1: x -> essential -> 9 -> y", "1: x -> essential -> 9 -> y",
                                     "1: x -> essential -> 9 -> y"});
  auto r = run({"optimize", "--subtask", "2", "--dev", test::fixture_path("cases2.json"), "--backend", "scripted",
                "--script", dir / "script", "--no-cache", "--programs", dir / "programs", "--runs-dir",
                dir / "runs", "--max-trials", "1", "--instructions", "1", "--demo-subsets", "1"});
  // Case c2 has no scripted replies left, so one case errors.
  EXPECT_EQ(r.code, 2) << r.err;
  auto saved = load_program(dir.path() / "programs" / "st2.classify.json");
  EXPECT_EQ(saved, programs::classify());
  auto csv = read_file(dir.path() / "programs" / "st2.trials.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}

TEST(Cli, OptimizePrintsBestScore) {
  test::TempDir dir;
  auto one = nlohmann::json::parse(read_file(test::fixture_path("cases2.json")));
  one.erase(1);
  write_file_atomic(dir.path() / "dev.json", one.dump());
  write_script(dir, "opt.propose", {"instruction_1: Alternative wording."});
  write_script(dir, "st1.interpret", {"clinician_question: Why?",
                                      "clinician_question: Why was the patient started on antiplatelet therapy?"});
  write_script(dir, "judge.st1.semantic", {"score: 0.3333333333333333", "score: 0.8333333333333334"});
  auto r = run({"optimize", "--subtask", "1", "--dev", dir / "dev.json", "--backend", "scripted", "--script",
                dir / "script", "--no-cache", "--programs", dir / "programs", "--runs-dir", dir / "runs",
                "--instructions", "2", "--demo-subsets", "1", "--max-trials", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("best score: 0.9\n"), std::string::npos) << r.out;
  auto csv = read_file(dir.path() / "programs" / "st1.trials.csv");
  EXPECT_NE(csv.find(",0.300000\n"), std::string::npos) << csv;
  EXPECT_NE(csv.find(",0.900000\n"), std::string::npos) << csv;
  EXPECT_EQ(load_program(dir.path() / "programs" / "st1.interpret.json").instruction, "Alternative wording.");
}

TEST(Cli, OptimizeWithoutGoldExitsOne) {
  test::TempDir dir;
  auto r = run({"optimize", "--subtask", "2", "--dev", test::fixture_path("cases_no_gold.json"), "--backend",
                "scripted", "--script", dir.path().string(), "--no-cache", "--programs", dir / "programs"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("gold"), std::string::npos);
}

TEST(Cli, EvaluatePerfectEvidence) {
  test::TempDir dir;
  write_file_atomic(dir.path() / "s.json", R"({"c1": {"essential": [2, 5]}, "c2": {"essential": [1, 3]},
                                              "c3": {"essential": [3]}})");
  auto r = run({"evaluate", "--subtask", "2", "--submission", dir / "s.json", "--gold",
                test::fixture_path("cases3.json"), "--report", dir / "report.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rep = json::parse(read_file(dir.path() / "report.json"));
  for (const auto& [k, v] : rep["metrics"].items()) EXPECT_DOUBLE_EQ(v.get<double>(), 1.0) << k;
  EXPECT_NE(r.out.find("Strict Micro F1"), std::string::npos);
}

TEST(Cli, EvaluateAlignmentPooled) {
  test::TempDir dir;
  auto gold = nlohmann::json::parse(read_file(test::fixture_path("cases3.json")));
  gold[2]["gold"]["alignments"] = nlohmann::json::parse(R"([{"answer_id": 1, "note_ids": [1]}])");
  write_file_atomic(dir.path() / "gold.json", gold.dump());
  // TP 3 (c1 x2, c2 x1), FP 1 (c2 1->4), FN 2 (c2 1->3, c3 1->1).
  write_file_atomic(dir.path() / "s.json", R"({
    "c1": {"links": [{"answer_id": 1, "note_ids": [2]}, {"answer_id": 2, "note_ids": [5]}]},
    "c2": {"links": [{"answer_id": 1, "note_ids": [1, 4], "confidences": [0.95, 0.91]}]},
    "c3": {"links": []}})");
  auto r = run({"evaluate", "--subtask", "4", "--submission", dir / "s.json", "--gold", dir / "gold.json",
                "--report", dir / "report.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rep = json::parse(read_file(dir.path() / "report.json"));
  EXPECT_DOUBLE_EQ(rep["metrics"]["Micro P"].get<double>(), 0.75);
  EXPECT_DOUBLE_EQ(rep["metrics"]["Micro R"].get<double>(), 0.6);
  EXPECT_NEAR(rep["metrics"]["Micro F1"].get<double>(), 2.0 / 3, 1e-15);
  EXPECT_NE(r.out.find("0.6667"), std::string::npos);
}

TEST(Cli, EvaluateTextMetricsMarkMissingColumns) {
  test::TempDir dir;
  write_file_atomic(dir.path() / "s.json", R"({"c1": {"answer": "He received a drug-eluting stent."},
    "c2": {"answer": "An infection [1]."}, "c3": {"answer": "Low fat diet."}})");
  auto r = run({"evaluate", "--subtask", "3", "--submission", dir / "s.json", "--gold",
                test::fixture_path("cases3.json"), "--report", dir / "report.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rep = json::parse(read_file(dir.path() / "report.json"));
  EXPECT_EQ(rep["metrics"]["BERTScore"], "not computed");
  EXPECT_EQ(rep["metrics"]["Overall"], "not computed");
  EXPECT_NEAR(rep["metrics"]["Format valid"].get<double>(), 2.0 / 3, 1e-15);
  EXPECT_GT(rep["metrics"]["ROUGE-L"].get<double>(), 0.0);
}

TEST(Cli, EvaluateUnknownCaseExitsOne) {
  test::TempDir dir;
  write_file_atomic(dir.path() / "s.json", R"({"c1": {"essential": [2]}, "zz": {"essential": [1]}})");
  auto r = run({"evaluate", "--subtask", "2", "--submission", dir / "s.json", "--gold",
                test::fixture_path("cases2.json")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("zz"), std::string::npos);
  EXPECT_NE(r.err.find("c2"), std::string::npos);
}

TEST(Cli, Validate) {
  test::TempDir dir;
  EXPECT_EQ(run({"validate", "--cases", test::fixture_path("cases3.json")}).code, 0);
  write_file_atomic(dir.path() / "q.json", R"({"c1": {"clinician_question": "Why was heparin given"}})");
  auto r = run({"validate", "--submission", dir / "q.json", "--subtask", "1"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("missing_question_mark"), std::string::npos);
  EXPECT_EQ(run({"validate"}).code, 1);
}
