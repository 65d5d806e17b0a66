#include <gtest/gtest.h>

#include <random>

#include "gqa/evaluation.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace gqa;
using namespace gqa::eval;

namespace {

GoldAnnotations gold_of(const std::set<int>& essential, const std::set<int>& supplementary, int n) {
  GoldAnnotations g;
  for (int i = 1; i <= n; ++i) {
    g.relevance[i] = essential.count(i)       ? RelevanceLabel::essential
                     : supplementary.count(i) ? RelevanceLabel::supplementary
                                              : RelevanceLabel::not_relevant;
  }
  return g;
}

void expect_prf(const PRF& got, const oracle::ExactPRF& want, const char* what) {
  EXPECT_NEAR(got.precision, want.p.value(), 1e-12) << what;
  EXPECT_NEAR(got.recall, want.r.value(), 1e-12) << what;
  EXPECT_NEAR(got.f1, want.f.value(), 1e-12) << what;
}

}  // namespace

TEST(EvidenceMetrics, WorkedExample) {
  auto m = evidence_metrics({{"c", {2, 7, 9}}}, {{"c", gold_of({2, 5}, {7}, 9)}});
  EXPECT_NEAR(m.strict_micro.precision, 1.0 / 3, 1e-15);
  EXPECT_NEAR(m.strict_micro.recall, 0.5, 1e-15);
  EXPECT_NEAR(m.strict_micro.f1, 0.4, 1e-15);
  EXPECT_NEAR(m.lenient_micro.precision, 2.0 / 3, 1e-15);
  EXPECT_NEAR(m.lenient_micro.recall, 0.5, 1e-15);
  EXPECT_NEAR(m.lenient_micro.f1, 4.0 / 7, 1e-15);
  // One case: micro equals macro.
  EXPECT_NEAR(m.strict_macro.f1, m.strict_micro.f1, 1e-15);
  EXPECT_NEAR(m.lenient_macro.precision, m.lenient_micro.precision, 1e-15);
}

TEST(EvidenceMetrics, PerfectPrediction) {
  auto m = evidence_metrics({{"c", {1, 3}}}, {{"c", gold_of({1, 3}, {}, 4)}});
  for (const auto* prf : {&m.strict_micro, &m.lenient_micro, &m.strict_macro, &m.lenient_macro}) {
    EXPECT_DOUBLE_EQ(prf->precision, 1.0);
    EXPECT_DOUBLE_EQ(prf->recall, 1.0);
    EXPECT_DOUBLE_EQ(prf->f1, 1.0);
  }
}

TEST(EvidenceMetrics, MacroAveragesPerCaseF1) {
  // Case a: perfect (F1 1). Case b: disjoint (F1 0). Sizes balanced.
  auto m = evidence_metrics({{"a", {1, 2}}, {"b", {3, 4}}},
                            {{"a", gold_of({1, 2}, {}, 4)}, {"b", gold_of({1, 2}, {}, 4)}});
  EXPECT_DOUBLE_EQ(m.strict_macro.f1, 0.5);
  EXPECT_DOUBLE_EQ(m.strict_micro.precision, 0.5);
  EXPECT_DOUBLE_EQ(m.strict_micro.recall, 0.5);
  EXPECT_DOUBLE_EQ(m.strict_micro.f1, 0.5);
  // Unbalanced: micro moves, macro F1 stays the mean of 1 and 0.
  auto u = evidence_metrics({{"a", {1}}, {"b", {3, 4, 5}}},
                            {{"a", gold_of({1}, {}, 5)}, {"b", gold_of({1, 2}, {}, 5)}});
  EXPECT_DOUBLE_EQ(u.strict_macro.f1, 0.5);
  EXPECT_NEAR(u.strict_micro.f1, oracle::harmonic({1, 4}, {1, 3}).value(), 1e-15);
}

TEST(EvidenceMetrics, EmptySetConventions) {
  auto m = evidence_metrics({{"a", {}}, {"b", {}}}, {{"a", gold_of({}, {}, 3)}, {"b", gold_of({1}, {}, 3)}});
  // a: P=1 R=1; b: P=0 R=0.
  EXPECT_DOUBLE_EQ(m.strict_macro.precision, 0.5);
  EXPECT_DOUBLE_EQ(m.strict_macro.recall, 0.5);
  EXPECT_DOUBLE_EQ(m.strict_macro.f1, 0.5);
  EXPECT_DOUBLE_EQ(m.strict_micro.precision, 0.0);
  EXPECT_DOUBLE_EQ(m.strict_micro.f1, 0.0);
}

TEST(EvidenceMetrics, MissingGoldNamesCase) {
  try {
    evidence_metrics({{"zz", {1}}}, {});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos);
  }
}

TEST(EvidenceMetrics, AgreesWithOracleOnRandomInstances) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    std::map<std::string, std::set<int>> preds;
    std::map<std::string, GoldAnnotations> golds;
    std::vector<oracle::EvidenceCase> oc;
    const int n_cases = 1 + static_cast<int>(rng() % 10);
    for (int c = 0; c < n_cases; ++c) {
      const int n = 1 + static_cast<int>(rng() % 12);
      oracle::EvidenceCase e;
      for (int i = 1; i <= n; ++i) {
        const auto roll = rng() % 3;
        if (roll == 0) e.essential.insert(i);
        else if (roll == 1) e.supplementary.insert(i);
        if (rng() % 2) e.predicted.insert(i);
      }
      const std::string id = "c" + std::to_string(c);
      preds[id] = e.predicted;
      golds[id] = gold_of(e.essential, e.supplementary, n);
      oc.push_back(e);
    }
    const auto got = evidence_metrics(preds, golds);
    const auto want = oracle::evidence(oc);
    expect_prf(got.strict_micro, want.strict_micro, "strict micro");
    expect_prf(got.lenient_micro, want.lenient_micro, "lenient micro");
    expect_prf(got.strict_macro, want.strict_macro, "strict macro");
    expect_prf(got.lenient_macro, want.lenient_macro, "lenient macro");
    EXPECT_EQ(got.strict_micro.recall, got.lenient_micro.recall);
    EXPECT_LE(got.strict_micro.precision, got.lenient_micro.precision);
  }
}

TEST(AlignmentMetrics, PooledCounts) {
  // TP 3, FP 1, FN 2 across two cases.
  GoldAnnotations g1;
  g1.alignments = {{1, {1, 2}}, {2, {3}}};
  GoldAnnotations g2;
  g2.alignments = {{1, {1, 2}}};
  std::vector<AlignmentLink> p1{{1, 1, 0.95}, {1, 2, 0.91}, {2, 4, 0.99}};
  std::vector<AlignmentLink> p2{{1, 1, 0.93}};
  auto m = alignment_metrics({{"a", p1}, {"b", p2}}, {{"a", g1}, {"b", g2}});
  EXPECT_DOUBLE_EQ(m.micro_precision, 0.75);
  EXPECT_DOUBLE_EQ(m.micro_recall, 0.6);
  EXPECT_NEAR(m.micro_f1, 2.0 / 3, 1e-15);
}

TEST(AlignmentMetrics, EmptyPredictionIsZero) {
  GoldAnnotations g;
  g.alignments = {{1, {1}}};
  auto m = alignment_metrics({{"a", {}}}, {{"a", g}});
  EXPECT_EQ(m.micro_precision, 0.0);
  EXPECT_EQ(m.micro_recall, 0.0);
  EXPECT_EQ(m.micro_f1, 0.0);
}

TEST(AlignmentMetrics, AgreesWithOracleOnRandomInstances) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    std::map<std::string, std::vector<AlignmentLink>> preds;
    std::map<std::string, GoldAnnotations> golds;
    std::vector<std::pair<std::set<LinkKey>, std::set<LinkKey>>> oc;
    const int n_cases = 1 + static_cast<int>(rng() % 10);
    for (int c = 0; c < n_cases; ++c) {
      std::set<LinkKey> p, gset;
      GoldAnnotations g;
      std::vector<AlignmentLink> links;
      for (int a = 1; a <= 3; ++a) {
        GoldAlignment ga{a, {}};
        for (int n = 1; n <= 4; ++n) {
          if (rng() % 3 == 0) {
            ga.note_ids.insert(n);
            gset.insert({a, n});
          }
          if (rng() % 3 == 0) {
            links.push_back({a, n, 0.5});
            p.insert({a, n});
          }
        }
        g.alignments.push_back(ga);
      }
      preds["c" + std::to_string(c)] = links;
      golds["c" + std::to_string(c)] = g;
      oc.emplace_back(p, gset);
    }
    const auto got = alignment_metrics(preds, golds);
    const auto want = oracle::alignment(oc);
    EXPECT_NEAR(got.micro_precision, want.p.value(), 1e-12);
    EXPECT_NEAR(got.micro_recall, want.r.value(), 1e-12);
    EXPECT_NEAR(got.micro_f1, want.f.value(), 1e-12);
  }
}

TEST(Rouge, WorkedExample) {
  auto r = rouge_l("why was aspirin given", "why was he given aspirin");
  EXPECT_DOUBLE_EQ(r.precision, 0.75);
  EXPECT_DOUBLE_EQ(r.recall, 0.6);
  EXPECT_NEAR(r.f1, 2.0 / 3, 1e-15);
}

TEST(Rouge, EdgeCases) {
  auto same = rouge_l("Heparin, given!", "heparin given");
  EXPECT_DOUBLE_EQ(same.f1, 1.0);
  EXPECT_DOUBLE_EQ(rouge_l("", "").f1, 1.0);
  EXPECT_DOUBLE_EQ(rouge_l("", "x").f1, 0.0);
  EXPECT_DOUBLE_EQ(rouge_l("a b", "c d").f1, 0.0);
}

TEST(Rouge, SwapSymmetry) {
  std::mt19937 rng(3);
  const char* vocab[] = {"a", "b", "c", "d", "e"};
  for (int t = 0; t < 200; ++t) {
    std::string x, y;
    for (int i = 0; i < 1 + static_cast<int>(rng() % 8); ++i) x += std::string(vocab[rng() % 5]) + " ";
    for (int i = 0; i < 1 + static_cast<int>(rng() % 8); ++i) y += std::string(vocab[rng() % 5]) + " ";
    auto a = rouge_l(x, y);
    auto b = rouge_l(y, x);
    EXPECT_DOUBLE_EQ(a.precision, b.recall);
    EXPECT_DOUBLE_EQ(a.recall, b.precision);
    EXPECT_NEAR(a.f1, b.f1, 1e-15);
  }
}

TEST(Bleu, ReferenceValues) {
  EXPECT_DOUBLE_EQ(bleu("why was he given heparin", {"why was he given heparin"}), 1.0);
  EXPECT_DOUBLE_EQ(bleu("", {"x"}), 0.0);
  // Independent Python computation of the same definition.
  EXPECT_NEAR(bleu("a b c d", {"a b c e"}), 0.6580370064762462, 1e-12);
  EXPECT_NEAR(bleu("the cat sat", {"the cat sat on the mat"}), 0.36787944117144233, 1e-12);
  EXPECT_DOUBLE_EQ(bleu("x y", {"a b"}), 0.0);
  EXPECT_THROW(bleu("a", {}), ValidationError);
}

TEST(Bleu, ClosestReferenceLength) {
  // Candidate length 3 matches the second reference, so no brevity penalty.
  EXPECT_DOUBLE_EQ(bleu("a b c", {"a b c d e f", "a b c"}), 1.0);
}

TEST(Tokenize, LowercasesAndSplitsOnPunctuation) {
  EXPECT_EQ(tokenize("Why, he's OK?"), (std::vector<std::string>{"why", "he", "s", "ok"}));
  EXPECT_EQ(tokenize("caf\xc3\xa9 bar").front(), "caf\xc3\xa9");
}

TEST(Validator, QuestionRules) {
  std::string q15;
  for (int i = 0; i < 14; ++i) q15 += "w ";
  q15 += "end?";
  EXPECT_TRUE(validate_output(q15, Subtask::interpretation).empty());
  EXPECT_EQ(validate_output("extra " + q15, Subtask::interpretation),
            (std::vector<Violation>{Violation::over_word_limit}));
  EXPECT_EQ(validate_output("no mark", Subtask::interpretation),
            (std::vector<Violation>{Violation::missing_question_mark}));
  EXPECT_EQ(validate_output("  ", Subtask::interpretation), (std::vector<Violation>{Violation::empty}));
  EXPECT_THROW(validate_output("x", Subtask::evidence), ValidationError);
}

TEST(Validator, AnswerRules) {
  std::string a75;
  for (int i = 0; i < 75; ++i) a75 += "w ";
  EXPECT_TRUE(validate_output(a75, Subtask::answer).empty());
  EXPECT_EQ(validate_output(a75 + "x", Subtask::answer), (std::vector<Violation>{Violation::over_word_limit}));
  EXPECT_EQ(validate_output("He got heparin [1].", Subtask::answer),
            (std::vector<Violation>{Violation::citation_marker_present}));
  // Markers do not count as words.
  EXPECT_EQ(validate_output(a75 + "[2, 3]", Subtask::answer),
            (std::vector<Violation>{Violation::citation_marker_present}));
}

TEST(CitationMarkers, StripVariants) {
  EXPECT_EQ(strip_citation_markers("A [1]. B [2, 3]; C [4-6] D [ 7 ]."), "A. B; C D.");
  EXPECT_EQ(strip_citation_markers("nested [[1]2] end"), "nested end");
  EXPECT_EQ(strip_citation_markers("keep [a] and [1a]"), "keep [a] and [1a]");
  EXPECT_FALSE(has_citation_marker("none here"));
}
