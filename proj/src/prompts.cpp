#include "gqa/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <regex>
#include <sstream>

namespace gqa {

using json = nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::optional<int> to_int(std::string_view s) {
  std::string t = trim(s);
  int v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) return std::nullopt;
  return v;
}

std::optional<double> to_double(std::string_view s) {
  std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::vector<std::string> split_list(std::string_view s, char sep) {
  std::vector<std::string> items;
  if (trim(s).empty()) return items;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    items.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return items;
}

// Position just past "<label>:" when the line starts with that label.
std::optional<std::size_t> label_end(std::string_view line, std::string_view label) {
  std::size_t i = 0;
  while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
  if (line.size() - i < label.size()) return std::nullopt;
  if (lower(line.substr(i, label.size())) != lower(label)) return std::nullopt;
  i += label.size();
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  if (i >= line.size() || line[i] != ':') return std::nullopt;
  return i + 1;
}

void append_fields(std::ostringstream& out, const std::vector<Field>& fields,
                   const std::map<std::string, std::string>& values) {
  bool first = true;
  for (const auto& f : fields) {
    auto it = values.find(f.name);
    if (it == values.end()) continue;
    if (!first) out << "\n\n";
    first = false;
    out << f.name << ": " << it->second;
  }
}

std::string render_outputs(const PromptProgram& p, const std::map<std::string, std::string>& outputs) {
  std::ostringstream out;
  bool first = true;
  if (auto it = outputs.find("reasoning"); it != outputs.end() && p.chain_of_thought) {
    out << "reasoning: " << it->second;
    first = false;
  }
  for (const auto& f : p.output_fields) {
    auto it = outputs.find(f.name);
    if (it == outputs.end()) continue;
    if (!first) out << "\n\n";
    first = false;
    out << f.name << ": " << it->second;
  }
  return out.str();
}

}  // namespace

void validate_program(const PromptProgram& program) {
  if (trim(program.instruction).empty()) {
    throw ValidationError("program " + program.name + " has an empty instruction");
  }
  std::set<std::string> inputs;
  std::set<std::string> outputs;
  for (const auto& f : program.input_fields) {
    if (!inputs.insert(f.name).second) {
      throw ValidationError("program " + program.name + " repeats field " + f.name);
    }
  }
  for (const auto& f : program.output_fields) {
    if (inputs.count(f.name) || !outputs.insert(f.name).second) {
      throw ValidationError("program " + program.name + " repeats field " + f.name);
    }
  }
  if (program.chain_of_thought) outputs.insert("reasoning");
  for (const auto& d : program.demos) {
    for (const auto& [k, v] : d.inputs) {
      if (!inputs.count(k)) {
        throw ValidationError("demo uses undeclared input field " + k + " in " + program.name);
      }
    }
    for (const auto& [k, v] : d.outputs) {
      if (!outputs.count(k)) {
        throw ValidationError("demo uses undeclared output field " + k + " in " + program.name);
      }
    }
  }
}

std::string output_contract(const PromptProgram& program) {
  std::ostringstream out;
  out << "---\nYou will receive the following inputs:\n";
  for (const auto& f : program.input_fields) out << "- " << f.name << ": " << f.description << "\n";
  out << "\nReply with the following fields in this order, each introduced by its label "
         "at the start of a line:\n";
  if (program.chain_of_thought) {
    out << "reasoning: Think step by step in order to produce the answer.\n";
  }
  for (const auto& f : program.output_fields) out << f.name << ": " << f.description << "\n";
  return out.str();
}

std::vector<ChatMessage> render(const PromptProgram& program,
                                const std::map<std::string, std::string>& inputs) {
  for (const auto& f : program.input_fields) {
    if (!inputs.count(f.name)) {
      throw RenderError("missing input field '" + f.name + "' for program " + program.name);
    }
  }
  std::vector<ChatMessage> messages;
  messages.push_back({Role::system, program.instruction + "\n\n" + output_contract(program)});
  for (const auto& d : program.demos) {
    std::ostringstream user;
    append_fields(user, program.input_fields, d.inputs);
    messages.push_back({Role::user, user.str()});
    messages.push_back({Role::assistant, render_outputs(program, d.outputs)});
  }
  std::ostringstream user;
  append_fields(user, program.input_fields, inputs);
  messages.push_back({Role::user, user.str()});
  return messages;
}

json to_json(const PromptProgram& program) {
  auto fields = [](const std::vector<Field>& fs) {
    json arr = json::array();
    for (const auto& f : fs) arr.push_back({{"name", f.name}, {"description", f.description}});
    return arr;
  };
  json demos = json::array();
  for (const auto& d : program.demos) demos.push_back({{"inputs", d.inputs}, {"outputs", d.outputs}});
  return {{"name", program.name},
          {"instruction", program.instruction},
          {"input_fields", fields(program.input_fields)},
          {"output_fields", fields(program.output_fields)},
          {"demos", demos},
          {"chain_of_thought", program.chain_of_thought}};
}

PromptProgram program_from_json(const json& doc) {
  try {
    PromptProgram p;
    p.name = doc.at("name").get<std::string>();
    p.instruction = doc.at("instruction").get<std::string>();
    for (const auto& f : doc.at("input_fields")) {
      p.input_fields.push_back({f.at("name").get<std::string>(), f.at("description").get<std::string>()});
    }
    for (const auto& f : doc.at("output_fields")) {
      p.output_fields.push_back({f.at("name").get<std::string>(), f.at("description").get<std::string>()});
    }
    for (const auto& d : doc.at("demos")) {
      p.demos.push_back({d.at("inputs").get<std::map<std::string, std::string>>(),
                         d.at("outputs").get<std::map<std::string, std::string>>()});
    }
    p.chain_of_thought = doc.at("chain_of_thought").get<bool>();
    validate_program(p);
    return p;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed prompt program: ") + e.what());
  }
}

void save_program(const PromptProgram& program, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(program).dump(2) + "\n");
}

PromptProgram load_program(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return program_from_json(doc);
}

std::string program_hash(const PromptProgram& program) { return sha256_hex(to_json(program).dump()); }

// ---------------------------------------------------------------- parsers

std::string parse_labeled_field(std::string_view raw, std::string_view field,
                                std::span<const std::string> labels) {
  std::vector<std::string> stops(labels.begin(), labels.end());
  if (stops.empty()) stops.push_back("reasoning");
  auto lines = split_lines(raw);

  std::optional<std::size_t> start_line;
  std::size_t start_col = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (auto end = label_end(lines[i], field)) {
      start_line = i;
      start_col = *end;
    }
  }
  if (!start_line) return trim(raw);

  std::string out(lines[*start_line].substr(start_col));
  for (std::size_t i = *start_line + 1; i < lines.size(); ++i) {
    bool is_label = std::any_of(stops.begin(), stops.end(), [&](const std::string& l) {
      return lower(l) != lower(field) && label_end(lines[i], l).has_value();
    });
    if (is_label) break;
    out += '\n';
    out += lines[i];
  }
  return trim(out);
}

VerdictParse parse_st2(std::string_view raw, const std::set<int>& expected_ids) {
  static const std::regex head(R"(^\s*(?:[-*]\s*)?\[?(\d+)\]?\s*:(.*)$)");
  VerdictParse result;
  std::set<int> seen;
  int well_formed = 0;
  for (auto line_view : split_lines(raw)) {
    std::string line(line_view);
    if (trim(line).empty()) continue;
    std::smatch m;
    if (!std::regex_match(line, m, head)) {
      ++result.malformed;
      continue;
    }
    const int id = std::stoi(m[1].str());
    std::vector<std::string> segs;
    {
      std::string rest = m[2].str();
      std::size_t start = 0;
      while (true) {
        auto pos = rest.find("->", start);
        segs.push_back(rest.substr(start, pos == std::string::npos ? pos : pos - start));
        if (pos == std::string::npos) break;
        start = pos + 2;
      }
    }
    // The label is the first segment naming a verdict followed by an integer score.
    std::optional<std::size_t> k;
    for (std::size_t i = 1; i + 1 < segs.size(); ++i) {
      auto label = lower(trim(segs[i]));
      if ((label == "essential" || label == "irrelevant") && to_int(segs[i + 1])) {
        k = i;
        break;
      }
    }
    if (!k) {
      ++result.malformed;
      continue;
    }
    const int score = *to_int(segs[*k + 1]);
    if (score < 0 || score > 10) {
      ++result.malformed;
      continue;
    }
    ++well_formed;
    if (!expected_ids.count(id)) {
      result.warnings.push_back("dropped verdict for unexpected sentence id " + std::to_string(id));
      continue;
    }
    if (!seen.insert(id).second) {
      result.warnings.push_back("ignored repeated verdict for sentence id " + std::to_string(id));
      continue;
    }
    auto join = [&](std::size_t from, std::size_t to) {
      std::string s;
      for (std::size_t i = from; i < to; ++i) {
        if (i > from) s += "->";
        s += segs[i];
      }
      return trim(s);
    };
    SentenceVerdict v;
    v.note_id = id;
    v.label = lower(trim(segs[*k])) == "essential" ? Verdict::essential : Verdict::irrelevant;
    v.score = score;
    v.sentence = join(0, *k);
    v.reasoning = join(*k + 2, segs.size());
    result.verdicts.push_back(std::move(v));
  }
  if (well_formed == 0) {
    throw ParseError("no parseable verdict lines in model output:\n" + std::string(raw));
  }
  for (int id : expected_ids) {
    if (!seen.count(id)) result.absent.insert(id);
  }
  return result;
}

std::string format_verdict(const SentenceVerdict& v) {
  std::ostringstream out;
  out << v.note_id << ": " << v.sentence << " -> "
      << (v.label == Verdict::essential ? "essential" : "irrelevant") << " -> " << v.score << " -> "
      << v.reasoning;
  return out.str();
}

LinkParse parse_st4(std::string_view raw, int answer_count, const std::set<int>& note_ids) {
  if (answer_count < 1) throw ValidationError("answer_count must be >= 1");
  static const std::regex line_re(
      R"(^\s*(?:[-*]\s*)?answer_sentence_(\d+)\s*:\s*\[([^\]]*)\]\s*\(\s*confidence\s*=\s*\[([^\]]*)\]\s*\)\s*$)",
      std::regex::icase);
  LinkParse result;
  std::set<LinkKey> seen;
  int well_formed = 0;
  for (auto line_view : split_lines(raw)) {
    std::string line(line_view);
    if (trim(line).empty()) continue;
    std::smatch m;
    if (!std::regex_match(line, m, line_re)) {
      ++result.malformed;
      continue;
    }
    const int answer_id = std::stoi(m[1].str());
    auto id_items = split_list(m[2].str(), ',');
    auto conf_items = split_list(m[3].str(), ',');
    if (id_items.size() != conf_items.size()) {
      ++result.malformed;
      result.warnings.push_back("rejected line with mismatched id/confidence counts: " + line);
      continue;
    }
    std::vector<std::pair<int, double>> pairs;
    bool ok = true;
    for (std::size_t i = 0; i < id_items.size() && ok; ++i) {
      auto id = to_int(id_items[i]);
      auto conf = to_double(conf_items[i]);
      ok = id && conf;
      if (ok) pairs.emplace_back(*id, *conf);
    }
    if (!ok) {
      ++result.malformed;
      continue;
    }
    ++well_formed;
    if (answer_id < 1 || answer_id > answer_count) {
      result.warnings.push_back("dropped line for unknown answer sentence " + std::to_string(answer_id));
      continue;
    }
    result.answered.insert(answer_id);
    for (auto [note_id, conf] : pairs) {
      if (!note_ids.count(note_id)) {
        result.warnings.push_back("dropped link to unknown note sentence " + std::to_string(note_id));
        continue;
      }
      if (conf < 0.0 || conf > 1.0) {
        result.warnings.push_back("clamped confidence " + std::to_string(conf) + " into [0,1]");
        conf = std::clamp(conf, 0.0, 1.0);
      }
      if (!seen.insert({answer_id, note_id}).second) continue;
      result.links.push_back({answer_id, note_id, conf});
    }
  }
  if (well_formed == 0) {
    throw ParseError("no parseable alignment lines in model output:\n" + std::string(raw));
  }
  return result;
}

std::string format_alignment_line(int answer_id, std::span<const AlignmentLink> links) {
  std::ostringstream ids;
  std::ostringstream confs;
  bool first = true;
  for (const auto& l : links) {
    if (l.answer_id != answer_id) continue;
    if (!first) {
      ids << ", ";
      confs << ", ";
    }
    first = false;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", l.confidence);
    ids << l.note_id;
    confs << buf;
  }
  return "answer_sentence_" + std::to_string(answer_id) + ": [" + ids.str() + "] (confidence=[" +
         confs.str() + "])";
}

std::string format_alignment(std::span<const AlignmentLink> links, int answer_count) {
  std::string out;
  for (int k = 1; k <= answer_count; ++k) {
    if (k > 1) out += '\n';
    out += format_alignment_line(k, links);
  }
  return out;
}

std::string render_note_excerpt(const CaseRecord& c) {
  std::string out;
  for (const auto& s : c.note_sentences) {
    if (!out.empty()) out += '\n';
    out += std::to_string(s.id) + ": " + s.text;
  }
  return out;
}

std::string render_answer_sentences(const std::vector<AnswerSentence>& answer) {
  std::string out;
  for (const auto& s : answer) {
    if (!out.empty()) out += '\n';
    out += "answer_sentence_" + std::to_string(s.id) + ": " + s.text;
  }
  return out;
}

}  // namespace gqa
