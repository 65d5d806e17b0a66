#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gqa/core.hpp"

namespace gqa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitPartial = 2;

/// Entry point shared by the executable and the tests. args excludes argv[0].
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Metric report for one subtask: `report` is the machine-readable map and
/// `text` the table printed by `evaluate`.
struct Report {
  nlohmann::json report;
  std::string text;
};

/// Throws ValidationError when submission and gold case ids differ.
Report evaluation_report(Subtask subtask, const std::vector<PredictionBundle>& submission,
                         const std::vector<CaseRecord>& gold_cases);

/// Plain `key = value` lines; `#` starts a comment.
std::map<std::string, std::string> parse_config(std::string_view text);

}  // namespace gqa::cli
