#include "gqa/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>

namespace gqa::eval {

namespace {

struct Counts {
  std::size_t predicted = 0;
  std::size_t gold = 0;  // recall denominator (essential)
  std::size_t strict_tp = 0;
  std::size_t lenient_tp = 0;
};

// Empty prediction: precision 1 if nothing was there to find, else 0.
double precision_of(std::size_t tp, std::size_t predicted, std::size_t gold) {
  if (predicted == 0) return gold == 0 ? 1.0 : 0.0;
  return static_cast<double>(tp) / static_cast<double>(predicted);
}

double recall_of(std::size_t tp, std::size_t gold) {
  if (gold == 0) return 1.0;
  return static_cast<double>(tp) / static_cast<double>(gold);
}

const std::regex& marker_regex() {
  static const std::regex re(R"(\s*\[\s*\d+(?:\s*(?:,|;|-|–)\s*\d+)*\s*\])");
  return re;
}

}  // namespace

double f1_score(double precision, double recall) {
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

EvidenceMetrics evidence_metrics(const std::map<std::string, std::set<int>>& predictions,
                                 const std::map<std::string, GoldAnnotations>& golds) {
  Counts pooled;
  PRF strict_sum;
  PRF lenient_sum;
  for (const auto& [case_id, pred] : predictions) {
    auto it = golds.find(case_id);
    if (it == golds.end()) throw ValidationError("no gold annotations for case " + case_id);
    const auto essential = it->second.essential_ids();
    const auto supplementary = it->second.supplementary_ids();
    Counts c;
    c.predicted = pred.size();
    c.gold = essential.size();
    for (int id : pred) {
      if (essential.count(id)) {
        ++c.strict_tp;
        ++c.lenient_tp;
      } else if (supplementary.count(id)) {
        ++c.lenient_tp;
      }
    }
    pooled.predicted += c.predicted;
    pooled.gold += c.gold;
    pooled.strict_tp += c.strict_tp;
    pooled.lenient_tp += c.lenient_tp;

    const double sp = precision_of(c.strict_tp, c.predicted, c.gold);
    const double lp = precision_of(c.lenient_tp, c.predicted, c.gold);
    const double r = recall_of(c.strict_tp, c.gold);
    strict_sum.precision += sp;
    strict_sum.recall += r;
    strict_sum.f1 += f1_score(sp, r);
    lenient_sum.precision += lp;
    lenient_sum.recall += r;
    lenient_sum.f1 += f1_score(lp, r);
  }

  EvidenceMetrics m;
  const double r = recall_of(pooled.strict_tp, pooled.gold);
  m.strict_micro.precision = precision_of(pooled.strict_tp, pooled.predicted, pooled.gold);
  m.strict_micro.recall = r;
  m.strict_micro.f1 = f1_score(m.strict_micro.precision, r);
  m.lenient_micro.precision = precision_of(pooled.lenient_tp, pooled.predicted, pooled.gold);
  m.lenient_micro.recall = r;
  m.lenient_micro.f1 = f1_score(m.lenient_micro.precision, r);

  // Macro F1 averages per-case F1 rather than combining the averaged P and R.
  if (!predictions.empty()) {
    const double n = static_cast<double>(predictions.size());
    m.strict_macro = {strict_sum.precision / n, strict_sum.recall / n, strict_sum.f1 / n};
    m.lenient_macro = {lenient_sum.precision / n, lenient_sum.recall / n, lenient_sum.f1 / n};
  }
  return m;
}

AlignmentMetrics alignment_metrics(const std::map<std::string, std::vector<AlignmentLink>>& predictions,
                                   const std::map<std::string, GoldAnnotations>& golds) {
  std::size_t tp = 0;
  std::size_t predicted = 0;
  std::size_t gold_total = 0;
  for (const auto& [case_id, links] : predictions) {
    auto it = golds.find(case_id);
    if (it == golds.end()) throw ValidationError("no gold annotations for case " + case_id);
    const auto gold = it->second.link_pairs();
    std::set<LinkKey> pred;
    for (const auto& l : links) pred.insert(l.key());
    predicted += pred.size();
    gold_total += gold.size();
    for (const auto& k : pred) tp += gold.count(k);
  }
  AlignmentMetrics m;
  m.micro_precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
  m.micro_recall = gold_total ? static_cast<double>(tp) / static_cast<double>(gold_total) : 0.0;
  m.micro_f1 = f1_score(m.micro_precision, m.micro_recall);
  return m;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    // Bytes >= 0x80 belong to multi-byte UTF-8 letters.
    if (std::isalnum(c) || c >= 0x80) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

PRF rouge_l(std::string_view candidate, std::string_view reference) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  if (cand.empty() && ref.empty()) return {1.0, 1.0, 1.0};
  if (cand.empty() || ref.empty()) return {0.0, 0.0, 0.0};
  std::vector<std::size_t> prev(ref.size() + 1, 0);
  std::vector<std::size_t> cur(ref.size() + 1, 0);
  for (std::size_t i = 1; i <= cand.size(); ++i) {
    for (std::size_t j = 1; j <= ref.size(); ++j) {
      cur[j] = cand[i - 1] == ref[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[ref.size()]);
  PRF out;
  out.precision = lcs / static_cast<double>(cand.size());
  out.recall = lcs / static_cast<double>(ref.size());
  out.f1 = f1_score(out.precision, out.recall);
  return out;
}

double bleu(std::string_view candidate, const std::vector<std::string>& references) {
  if (references.empty()) throw ValidationError("bleu needs at least one reference");
  const auto cand = tokenize(candidate);
  if (cand.empty()) return 0.0;
  std::vector<std::vector<std::string>> refs;
  for (const auto& r : references) refs.push_back(tokenize(r));

  using Ngram = std::vector<std::string>;
  auto ngrams = [](const std::vector<std::string>& toks, std::size_t n) {
    std::map<Ngram, std::size_t> counts;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
      ++counts[Ngram(toks.begin() + static_cast<long>(i), toks.begin() + static_cast<long>(i + n))];
    }
    return counts;
  };

  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto cand_counts = ngrams(cand, n);
    std::map<Ngram, std::size_t> max_ref;
    for (const auto& r : refs) {
      for (const auto& [g, c] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], c);
    }
    std::size_t matched = 0;
    std::size_t total = 0;
    for (const auto& [g, c] : cand_counts) {
      total += c;
      auto it = max_ref.find(g);
      if (it != max_ref.end()) matched += std::min(c, it->second);
    }
    double p = 0.0;
    if (n == 1) {
      if (matched == 0) return 0.0;
      p = static_cast<double>(matched) / static_cast<double>(total);
    } else {
      p = (static_cast<double>(matched) + 1.0) / (static_cast<double>(total) + 1.0);
    }
    log_sum += std::log(p);
  }

  const auto c = static_cast<double>(cand.size());
  double r = 0.0;
  double best_diff = 0.0;
  bool first = true;
  for (const auto& ref : refs) {
    const auto len = static_cast<double>(ref.size());
    const double diff = std::abs(len - c);
    if (first || diff < best_diff || (diff == best_diff && len < r)) {
      r = len;
      best_diff = diff;
      first = false;
    }
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / 4.0);
}

std::string_view to_string(Violation v) {
  switch (v) {
    case Violation::over_word_limit: return "over_word_limit";
    case Violation::missing_question_mark: return "missing_question_mark";
    case Violation::citation_marker_present: return "citation_marker_present";
    case Violation::empty: return "empty";
  }
  return "empty";
}

bool has_citation_marker(std::string_view text) {
  std::string s(text);
  return std::regex_search(s, marker_regex());
}

std::string strip_citation_markers(std::string_view text) {
  std::string s(text);
  // Removing one marker can expose another, e.g. "[[1]2]".
  while (std::regex_search(s, marker_regex())) s = std::regex_replace(s, marker_regex(), "");
  return normalize_space(s);
}

std::vector<Violation> validate_output(std::string_view text, Subtask subtask, std::size_t word_limit) {
  if (subtask != Subtask::interpretation && subtask != Subtask::answer) {
    throw ValidationError("output validation applies to subtasks 1 and 3 only");
  }
  std::vector<Violation> out;
  const std::string t = trim(text);
  if (t.empty()) {
    out.push_back(Violation::empty);
    return out;
  }
  if (subtask == Subtask::interpretation) {
    const auto limit = word_limit ? word_limit : kQuestionWordLimit;
    if (count_words(t) > limit) out.push_back(Violation::over_word_limit);
    if (t.back() != '?') out.push_back(Violation::missing_question_mark);
  } else {
    const auto limit = word_limit ? word_limit : kAnswerWordLimit;
    if (count_words(strip_citation_markers(t)) > limit) out.push_back(Violation::over_word_limit);
    if (has_citation_marker(t)) out.push_back(Violation::citation_marker_present);
  }
  return out;
}

}  // namespace gqa::eval
