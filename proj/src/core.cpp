#include "gqa/core.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace gqa {

using ordered_json = nlohmann::ordered_json;

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::size_t line_of_offset(std::string_view doc, std::size_t offset) {
  offset = std::min(offset, doc.size());
  return 1 + static_cast<std::size_t>(std::count(doc.begin(), doc.begin() + offset, '\n'));
}

ordered_json parse_json(std::string_view document) {
  try {
    return ordered_json::parse(document.begin(), document.end());
  } catch (const nlohmann::json::parse_error& e) {
    std::ostringstream msg;
    msg << "malformed document at line " << line_of_offset(document, e.byte) << ": " << e.what();
    throw ParseError(msg.str());
  }
}

// Field accessors that report the path of the offending field.
class FieldReader {
 public:
  FieldReader(const ordered_json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) fail("", "must be an object");
  }

  const ordered_json& at(const std::string& key) const {
    auto it = obj_.find(key);
    if (it == obj_.end()) fail(key, "is missing");
    return *it;
  }

  bool has_non_null(const std::string& key) const {
    auto it = obj_.find(key);
    return it != obj_.end() && !it->is_null();
  }

  std::string str(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_string()) fail(key, "must be a string");
    return v.get<std::string>();
  }

  int integer(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_number_integer()) fail(key, "must be an integer");
    return v.get<int>();
  }

  const ordered_json& array(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_array()) fail(key, "must be an array");
    return v;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    std::string path = key.empty() ? where_ : where_ + "." + key;
    throw ParseError("field " + path + " " + what);
  }

  const std::string& where() const { return where_; }

 private:
  const ordered_json& obj_;
  std::string where_;
};

int int_element(const ordered_json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ParseError("field " + where + " must be an integer");
  return v.get<int>();
}

template <class Sentence>
void check_contiguous(std::vector<Sentence>& sentences, const std::string& case_id,
                      const char* what) {
  std::sort(sentences.begin(), sentences.end(),
            [](const Sentence& a, const Sentence& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (i > 0 && sentences[i].id == sentences[i - 1].id) {
      throw ValidationError("duplicate " + std::string(what) + " id " +
                            std::to_string(sentences[i].id) + ", case " + case_id);
    }
  }
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (sentences[i].id != static_cast<int>(i) + 1) {
      throw ValidationError("non-contiguous " + std::string(what) + " ids, case " + case_id);
    }
  }
}

GoldAnnotations parse_gold(const ordered_json& j, const std::string& where) {
  FieldReader r(j, where);
  GoldAnnotations gold;
  const auto& rel = r.at("relevance");
  if (!rel.is_object()) r.fail("relevance", "must be an object");
  for (const auto& [key, value] : rel.items()) {
    int id = 0;
    try {
      std::size_t used = 0;
      id = std::stoi(key, &used);
      if (used != key.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      r.fail("relevance." + key, "key must be an integer sentence id");
    }
    if (!value.is_string()) r.fail("relevance." + key, "must be a string");
    auto label = relevance_from_string(value.get<std::string>());
    if (!label) r.fail("relevance." + key, "must be essential|supplementary|not-relevant");
    gold.relevance[id] = *label;
  }
  const auto& answers = r.array("reference_answer");
  for (std::size_t i = 0; i < answers.size(); ++i) {
    FieldReader a(answers[i], where + ".reference_answer[" + std::to_string(i) + "]");
    gold.reference_answer.push_back({a.integer("id"), trim(a.str("text"))});
  }
  const auto& aligns = r.array("alignments");
  for (std::size_t i = 0; i < aligns.size(); ++i) {
    std::string w = where + ".alignments[" + std::to_string(i) + "]";
    FieldReader a(aligns[i], w);
    GoldAlignment ga;
    ga.answer_id = a.integer("answer_id");
    const auto& ids = a.array("note_ids");
    for (std::size_t k = 0; k < ids.size(); ++k) {
      ga.note_ids.insert(int_element(ids[k], w + ".note_ids[" + std::to_string(k) + "]"));
    }
    gold.alignments.push_back(std::move(ga));
  }
  return gold;
}

CaseRecord parse_case(const ordered_json& j, std::size_t index) {
  FieldReader r(j, "cases[" + std::to_string(index) + "]");
  CaseRecord c;
  c.case_id = r.str("case_id");
  c.patient_narrative = trim(r.str("patient_narrative"));
  c.patient_question = trim(r.str("patient_question"));
  if (r.has_non_null("clinician_question")) c.clinician_question = trim(r.str("clinician_question"));
  const auto& notes = r.array("note_excerpt");
  for (std::size_t i = 0; i < notes.size(); ++i) {
    FieldReader n(notes[i], r.where() + ".note_excerpt[" + std::to_string(i) + "]");
    c.note_sentences.push_back({n.integer("id"), trim(n.str("text"))});
  }
  if (r.has_non_null("gold")) c.gold = parse_gold(r.at("gold"), r.where() + ".gold");
  validate_case(c);
  return c;
}

}  // namespace

std::string_view to_string(RelevanceLabel label) {
  switch (label) {
    case RelevanceLabel::essential: return "essential";
    case RelevanceLabel::supplementary: return "supplementary";
    case RelevanceLabel::not_relevant: return "not-relevant";
  }
  return "not-relevant";
}

std::optional<RelevanceLabel> relevance_from_string(std::string_view s) {
  if (s == "essential") return RelevanceLabel::essential;
  if (s == "supplementary") return RelevanceLabel::supplementary;
  if (s == "not-relevant") return RelevanceLabel::not_relevant;
  return std::nullopt;
}

std::set<int> GoldAnnotations::ids_with(RelevanceLabel label) const {
  std::set<int> out;
  for (const auto& [id, l] : relevance) {
    if (l == label) out.insert(id);
  }
  return out;
}

std::set<LinkKey> GoldAnnotations::link_pairs() const {
  std::set<LinkKey> out;
  for (const auto& a : alignments) {
    for (int n : a.note_ids) out.emplace(a.answer_id, n);
  }
  return out;
}

std::string GoldAnnotations::reference_text() const {
  std::string out;
  for (const auto& s : reference_answer) {
    if (!out.empty()) out += ' ';
    out += s.text;
  }
  return out;
}

std::set<int> CaseRecord::note_ids() const {
  std::set<int> ids;
  for (const auto& s : note_sentences) ids.insert(s.id);
  return ids;
}

const NoteSentence* CaseRecord::find_sentence(int id) const {
  for (const auto& s : note_sentences) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

Subtask subtask_from_int(int n) {
  if (n < 1 || n > 4) throw ValidationError("unknown subtask " + std::to_string(n));
  return static_cast<Subtask>(n);
}

std::size_t count_words(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (is_space(c)) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string normalize_space(std::string_view s) {
  std::string out;
  for (const auto& w : split_words(s)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

void validate_case(const CaseRecord& c) {
  const std::string& id = c.case_id;
  if (id.empty()) throw ValidationError("case with empty case_id");
  if (trim(c.patient_question).empty()) throw ValidationError("empty patient_question, case " + id);
  if (c.note_sentences.empty()) throw ValidationError("empty note_excerpt, case " + id);

  auto notes = c.note_sentences;
  for (const auto& s : notes) {
    if (s.text.empty() || s.text != trim(s.text)) {
      throw ValidationError("note sentence " + std::to_string(s.id) +
                            " has empty or untrimmed text, case " + id);
    }
  }
  check_contiguous(notes, id, "note sentence");
  if (!c.gold) return;

  const auto& gold = *c.gold;
  const int n_notes = static_cast<int>(notes.size());
  for (const auto& [sid, label] : gold.relevance) {
    if (sid < 1 || sid > n_notes) {
      throw ValidationError("relevance label for unknown sentence id " + std::to_string(sid) +
                            ", case " + id);
    }
  }
  auto answers = gold.reference_answer;
  for (const auto& a : answers) {
    if (a.text.empty()) throw ValidationError("empty reference answer sentence, case " + id);
  }
  check_contiguous(answers, id, "answer sentence");
  const int n_answers = static_cast<int>(answers.size());
  for (const auto& al : gold.alignments) {
    if (al.answer_id < 1 || al.answer_id > n_answers) {
      throw ValidationError("alignment references unknown answer_id " +
                            std::to_string(al.answer_id) + ", case " + id);
    }
    for (int nid : al.note_ids) {
      if (nid < 1 || nid > n_notes) {
        throw ValidationError("alignment references unknown note id " + std::to_string(nid) +
                              ", case " + id);
      }
    }
  }
}

std::vector<CaseRecord> parse_cases(std::string_view document) {
  auto doc = parse_json(document);
  if (!doc.is_array()) throw ParseError("case file must be a top-level list of case objects");
  std::vector<CaseRecord> cases;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    auto c = parse_case(doc[i], i);
    if (!seen.insert(c.case_id).second) {
      throw ValidationError("duplicate case_id " + c.case_id);
    }
    // Sentence lists are stored in id order once validated.
    std::sort(c.note_sentences.begin(), c.note_sentences.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    if (c.gold) {
      auto& ra = c.gold->reference_answer;
      std::sort(ra.begin(), ra.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    }
    cases.push_back(std::move(c));
  }
  return cases;
}

std::vector<CaseRecord> load_cases(const std::filesystem::path& path) {
  return parse_cases(read_file(path));
}

std::vector<AlignmentLink> canonical_links(std::vector<AlignmentLink> links) {
  std::stable_sort(links.begin(), links.end(),
                   [](const auto& a, const auto& b) { return a.key() < b.key(); });
  links.erase(std::unique(links.begin(), links.end(),
                          [](const auto& a, const auto& b) { return a.key() == b.key(); }),
              links.end());
  return links;
}

std::string format_submission(const std::vector<PredictionBundle>& bundles, Subtask subtask) {
  ordered_json doc = ordered_json::object();
  for (const auto& b : bundles) {
    auto missing = [&](const char* field) {
      return ValidationError("case " + b.case_id + " lacks " + field + " required by subtask " +
                             std::to_string(to_int(subtask)));
    };
    if (doc.contains(b.case_id)) throw ValidationError("duplicate case_id " + b.case_id);
    ordered_json entry = ordered_json::object();
    switch (subtask) {
      case Subtask::interpretation:
        if (!b.st1_question) throw missing("st1_question");
        entry["clinician_question"] = *b.st1_question;
        break;
      case Subtask::evidence:
        if (!b.st2_essential_ids) throw missing("st2_essential_ids");
        entry["essential"] = ordered_json::array();
        for (int id : *b.st2_essential_ids) entry["essential"].push_back(id);
        break;
      case Subtask::answer:
        if (!b.st3_answer) throw missing("st3_answer");
        entry["answer"] = *b.st3_answer;
        break;
      case Subtask::alignment: {
        if (!b.st4_links) throw missing("st4_links");
        entry["links"] = ordered_json::array();
        std::map<int, std::vector<AlignmentLink>> grouped;
        for (const auto& l : canonical_links(*b.st4_links)) grouped[l.answer_id].push_back(l);
        for (const auto& [aid, links] : grouped) {
          ordered_json rec;
          rec["answer_id"] = aid;
          rec["note_ids"] = ordered_json::array();
          rec["confidences"] = ordered_json::array();
          for (const auto& l : links) {
            rec["note_ids"].push_back(l.note_id);
            rec["confidences"].push_back(l.confidence);
          }
          entry["links"].push_back(std::move(rec));
        }
        break;
      }
    }
    doc[b.case_id] = std::move(entry);
  }
  return doc.dump(2) + "\n";
}

void write_submission(const std::vector<PredictionBundle>& bundles, Subtask subtask,
                      const std::filesystem::path& path) {
  write_file_atomic(path, format_submission(bundles, subtask));
}

std::vector<PredictionBundle> parse_submission(std::string_view document, Subtask subtask) {
  auto doc = parse_json(document);
  if (!doc.is_object()) throw ParseError("submission must be a map from case_id to prediction");
  std::vector<PredictionBundle> out;
  for (const auto& [case_id, entry] : doc.items()) {
    FieldReader r(entry, "submission." + case_id);
    PredictionBundle b;
    b.case_id = case_id;
    switch (subtask) {
      case Subtask::interpretation: b.st1_question = r.str("clinician_question"); break;
      case Subtask::evidence: {
        const auto& ids = r.array("essential");
        std::set<int> s;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          s.insert(int_element(ids[i], r.where() + ".essential[" + std::to_string(i) + "]"));
        }
        b.st2_essential_ids = std::move(s);
        break;
      }
      case Subtask::answer: b.st3_answer = r.str("answer"); break;
      case Subtask::alignment: {
        std::vector<AlignmentLink> links;
        const auto& recs = r.array("links");
        for (std::size_t i = 0; i < recs.size(); ++i) {
          std::string w = r.where() + ".links[" + std::to_string(i) + "]";
          FieldReader lr(recs[i], w);
          int aid = lr.integer("answer_id");
          const auto& ids = lr.array("note_ids");
          const ordered_json* confs = nullptr;
          if (lr.has_non_null("confidences")) {
            confs = &lr.array("confidences");
            if (confs->size() != ids.size()) lr.fail("confidences", "length differs from note_ids");
          }
          for (std::size_t k = 0; k < ids.size(); ++k) {
            double conf = 1.0;
            if (confs) {
              if (!(*confs)[k].is_number()) lr.fail("confidences", "must hold numbers");
              conf = (*confs)[k].get<double>();
            }
            links.push_back(
                {aid, int_element(ids[k], w + ".note_ids[" + std::to_string(k) + "]"), conf});
          }
        }
        b.st4_links = canonical_links(std::move(links));
        break;
      }
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<PredictionBundle> load_submission(const std::filesystem::path& path, Subtask subtask) {
  return parse_submission(read_file(path), subtask);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  static std::atomic<unsigned long> counter{0};
  auto tmp = path;
  tmp += ".tmp." + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace gqa
