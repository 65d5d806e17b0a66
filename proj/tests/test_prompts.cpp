#include <gtest/gtest.h>

#include <cstdlib>

#include "gqa/prompts.hpp"
#include "test_support.hpp"

using namespace gqa;

namespace {

PromptProgram tiny() {
  PromptProgram p;
  p.name = "tiny";
  p.instruction = "Do the thing.";
  p.input_fields = {{"question", "what is asked"}, {"notes", "the notes"}};
  p.output_fields = {{"answer", "the answer"}};
  return p;
}

}  // namespace

TEST(Render, SystemDemosThenInputs) {
  auto p = tiny();
  p.demos.push_back({{{"question", "q0"}, {"notes", "n0"}}, {{"answer", "a0"}}});
  auto msgs = render(p, {{"question", "q1"}, {"notes", "n1"}, {"extra", "ignored"}});
  ASSERT_EQ(msgs.size(), 4u);
  EXPECT_EQ(msgs[0].role, Role::system);
  EXPECT_EQ(msgs[0].content.rfind("Do the thing.\n\n---\nYou will receive the following inputs:\n", 0), 0u);
  EXPECT_NE(msgs[0].content.find("answer: the answer"), std::string::npos);
  EXPECT_EQ(msgs[1].role, Role::user);
  EXPECT_EQ(msgs[2].role, Role::assistant);
  EXPECT_NE(msgs[2].content.find("answer: a0"), std::string::npos);
  EXPECT_EQ(msgs[3].content, "question: q1\n\nnotes: n1");
}

TEST(Render, ChainOfThoughtAddsReasoningField) {
  auto p = tiny();
  EXPECT_EQ(output_contract(p).find("reasoning:"), std::string::npos);
  p.chain_of_thought = true;
  EXPECT_NE(output_contract(p).find("reasoning:"), std::string::npos);
}

TEST(Render, MissingInputIsRenderError) {
  try {
    render(tiny(), {{"question", "q"}});
    FAIL();
  } catch (const RenderError& e) {
    EXPECT_NE(std::string(e.what()).find("notes"), std::string::npos);
  }
}

TEST(Programs, ValidationRejectsBadShapes) {
  auto p = tiny();
  EXPECT_NO_THROW(validate_program(p));
  p.instruction = "  ";
  EXPECT_THROW(validate_program(p), ValidationError);
  p = tiny();
  p.output_fields.push_back({"notes", "dup"});
  EXPECT_THROW(validate_program(p), ValidationError);
  p = tiny();
  p.demos.push_back({{{"bogus", "x"}}, {}});
  EXPECT_THROW(validate_program(p), ValidationError);
}

TEST(Programs, JsonRoundTripAndHash) {
  auto p = tiny();
  p.demos.push_back({{{"question", "q0"}, {"notes", "n0"}}, {{"answer", "a0"}}});
  p.chain_of_thought = true;
  auto back = program_from_json(to_json(p));
  EXPECT_EQ(back, p);
  EXPECT_EQ(program_hash(back), program_hash(p));
  auto q = p;
  q.instruction += " ";
  EXPECT_NE(program_hash(q), program_hash(p));

  test::TempDir dir;
  save_program(p, dir.path() / "p.json");
  EXPECT_EQ(load_program(dir.path() / "p.json"), p);
  EXPECT_THROW(program_from_json(nlohmann::json::object()), Error);
}

TEST(Programs, DefaultsAreValidAndNamed) {
  auto all = programs::defaults();
  EXPECT_EQ(all.size(), 9u);
  for (const auto& [name, p] : all) {
    EXPECT_EQ(name, p.name);
    EXPECT_NO_THROW(validate_program(p)) << name;
  }
  EXPECT_TRUE(programs::interpret().chain_of_thought);
  EXPECT_EQ(programs::classify().output_fields.at(0).name, "verdicts");
  EXPECT_EQ(programs::align().output_fields.at(0).name, "alignment");
  EXPECT_EQ(programs::reflect().input_fields.back().name, "initial_alignment");
  EXPECT_EQ(programs::verify().input_fields.back().name, "reflected_alignment");
}

// Default system prompts are pinned as golden files. Set GQA_UPDATE_GOLDEN=1
// to rewrite them after an intentional change.
TEST(Programs, DefaultSystemPromptsMatchGolden) {
  const bool update = std::getenv("GQA_UPDATE_GOLDEN") != nullptr;
  for (const auto& [name, p] : programs::defaults()) {
    std::map<std::string, std::string> inputs;
    for (const auto& f : p.input_fields) inputs[f.name] = "";
    const auto system = render(p, inputs).front().content;
    const auto path = std::filesystem::path(GQA_GOLDEN) / (name + ".txt");
    if (update) write_file_atomic(path, system);
    ASSERT_TRUE(std::filesystem::exists(path)) << path;
    EXPECT_EQ(read_file(path), system) << name;
  }
}

// ------------------------------------------------------------------ ST2 parser

TEST(VerdictParser, ParsesWellFormedLines) {
  const std::string raw =
      "1: Heparin was started. -> essential -> 9 -> names the drug\n"
      "2: Diet advanced. -> irrelevant -> 1 -> unrelated\n";
  auto r = parse_st2(raw, {1, 2, 3});
  ASSERT_EQ(r.verdicts.size(), 2u);
  EXPECT_EQ(r.verdicts[0].label, Verdict::essential);
  EXPECT_EQ(r.verdicts[0].score, 9);
  EXPECT_EQ(r.verdicts[0].sentence, "Heparin was started.");
  EXPECT_EQ(r.verdicts[0].reasoning, "names the drug");
  EXPECT_EQ(r.absent, (std::set<int>{3}));
  EXPECT_EQ(r.malformed, 0);
}

TEST(VerdictParser, SkipsMalformedAndOutOfRange) {
  const std::string raw =
      "Here are my verdicts:\n"
      "1: a -> essential -> 11 -> too high\n"
      "2: b -> maybe -> 5 -> bad label\n"
      "3: c -> ESSENTIAL -> 7 -> ok\n"
      "9: d -> essential -> 8 -> unknown id\n"
      "3: c -> irrelevant -> 2 -> repeat\n";
  auto r = parse_st2(raw, {1, 2, 3});
  ASSERT_EQ(r.verdicts.size(), 1u);
  EXPECT_EQ(r.verdicts[0].note_id, 3);
  EXPECT_EQ(r.verdicts[0].label, Verdict::essential);
  EXPECT_EQ(r.malformed, 3);
  EXPECT_EQ(r.warnings.size(), 2u);
}

TEST(VerdictParser, ArrowInsideSentenceIsKept) {
  auto r = parse_st2("4: dose 5 -> 10 mg -> essential -> 8 -> dose change", {4});
  ASSERT_EQ(r.verdicts.size(), 1u);
  EXPECT_EQ(r.verdicts[0].sentence, "dose 5 -> 10 mg");
}

TEST(VerdictParser, AllMalformedThrows) {
  EXPECT_THROW(parse_st2("nothing useful\n\n", {1}), ParseError);
  EXPECT_THROW(parse_st2("", {1}), ParseError);
}

// ------------------------------------------------------------------ ST4 parser

TEST(LinkParser, ParsesAndFormats) {
  const std::string raw =
      "answer_sentence_1: [2, 5] (confidence=[0.95, 0.80])\n"
      "Answer_Sentence_2: [] (confidence=[])\n";
  auto r = parse_st4(raw, 2, {1, 2, 3, 4, 5});
  ASSERT_EQ(r.links.size(), 2u);
  EXPECT_EQ(r.links[0], (AlignmentLink{1, 2, 0.95}));
  EXPECT_EQ(r.answered, (std::set<int>{1, 2}));
  EXPECT_EQ(format_alignment(r.links, 2),
            "answer_sentence_1: [2, 5] (confidence=[0.95, 0.80])\n"
            "answer_sentence_2: [] (confidence=[])");
}

TEST(LinkParser, DropsUnknownIdsAndClampsConfidence) {
  const std::string raw =
      "answer_sentence_1: [2, 9] (confidence=[1.3, 0.5])\n"
      "answer_sentence_7: [1] (confidence=[0.9])\n"
      "answer_sentence_2: [1, 2] (confidence=[0.9])\n"
      "garbage\n";
  auto r = parse_st4(raw, 2, {1, 2, 3});
  ASSERT_EQ(r.links.size(), 1u);
  EXPECT_EQ(r.links[0], (AlignmentLink{1, 2, 1.0}));
  EXPECT_EQ(r.malformed, 2);
  EXPECT_EQ(r.answered, (std::set<int>{1}));
  EXPECT_GE(r.warnings.size(), 3u);
}

TEST(LinkParser, AllMalformedThrows) {
  EXPECT_THROW(parse_st4("answer_sentence_1: 2 (confidence=0.9)", 1, {2}), ParseError);
  EXPECT_THROW(parse_st4("x", 0, {2}), ValidationError);
}

// ------------------------------------------------------------------ labels

TEST(LabeledField, TakesLastLabelUpToNextLabel) {
  const std::string raw =
      "reasoning: first think\nclinician_question: draft?\n"
      "reasoning: again\nClinician_Question: Why was heparin given?\nextra line\nreasoning: tail";
  std::vector<std::string> labels{"reasoning", "clinician_question"};
  EXPECT_EQ(parse_labeled_field(raw, "clinician_question", labels), "Why was heparin given?\nextra line");
  EXPECT_EQ(parse_labeled_field("  plain text  ", "answer"), "plain text");
}

TEST(Excerpts, RenderedWithIds) {
  auto c = test::make_case("a", 2, {1});
  EXPECT_EQ(render_note_excerpt(c), "1: Note sentence number 1.\n2: Note sentence number 2.");
  EXPECT_EQ(render_answer_sentences({{1, "A."}, {2, "B."}}), "answer_sentence_1: A.\nanswer_sentence_2: B.");
}
