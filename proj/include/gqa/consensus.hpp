#pragma once

// Aggregation of stochastic runs: binary majority voting over items and the
// dual (vote quorum + mean confidence) filter over alignment links.

#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "gqa/core.hpp"

namespace gqa::consensus {

/// Votes needed out of `runs`: ceil(runs / 2).
constexpr int quorum(int runs) { return (runs + 1) / 2; }

/// Mean confidence compares above tau_c only when it exceeds it by more than this.
inline constexpr double kConfidenceTolerance = 1e-9;

template <class Key>
struct VoteTally {
  int runs = 0;
  std::map<Key, int> votes;
  /// One entry per run that emitted the item.
  std::map<Key, std::vector<double>> confidences;

  /// Record one run. Each key counts at most once per run.
  void add_run(const std::map<Key, double>& emitted) {
    ++runs;
    for (const auto& [key, conf] : emitted) {
      ++votes[key];
      confidences[key].push_back(conf);
    }
  }

  void add_run(const std::set<Key>& emitted) {
    ++runs;
    for (const auto& key : emitted) ++votes[key];
  }

  /// Count a run in which nothing was emitted (e.g. unparseable output).
  void add_empty_run() { ++runs; }
};

template <class Key>
void check_tally(const VoteTally<Key>& tally) {
  if (tally.runs < 1) throw std::invalid_argument("vote tally needs at least one run");
  for (const auto& [key, v] : tally.votes) {
    if (v < 0 || v > tally.runs) throw std::invalid_argument("vote count outside [0, R]");
  }
}

/// { i : votes_i >= ceil(R/2) }
template <class Key>
std::set<Key> majority_vote(const VoteTally<Key>& tally) {
  check_tally(tally);
  const int need = quorum(tally.runs);
  std::set<Key> out;
  for (const auto& [key, v] : tally.votes) {
    if (v >= need) out.insert(key);
  }
  return out;
}

enum class ConfidenceMean {
  emitting_runs,  // average over runs that produced the link
  all_runs,       // absent runs contribute zero
};

struct LinkDecision {
  AlignmentLink link;  // confidence holds the mean
  int votes = 0;
  bool retained = false;
};

using LinkTally = VoteTally<LinkKey>;

/// Every candidate link once, in key order, with its retain decision:
/// votes >= ceil(R/2) and mean confidence > tau_c.
inline std::vector<LinkDecision> aggregate_links(const LinkTally& tally, double tau_c,
                                                 ConfidenceMean mode = ConfidenceMean::emitting_runs) {
  check_tally(tally);
  if (!(tau_c >= 0.0 && tau_c <= 1.0)) throw std::invalid_argument("tau_c must lie in [0, 1]");
  const int need = quorum(tally.runs);
  std::vector<LinkDecision> out;
  for (const auto& [key, v] : tally.votes) {
    double sum = 0.0;
    auto it = tally.confidences.find(key);
    if (it != tally.confidences.end()) {
      for (double c : it->second) sum += c;
    }
    const int denom = mode == ConfidenceMean::emitting_runs ? v : tally.runs;
    const double mean = denom > 0 ? sum / denom : 0.0;
    LinkDecision d;
    d.link = {key.first, key.second, mean};
    d.votes = v;
    d.retained = v >= need && mean - tau_c > kConfidenceTolerance;
    out.push_back(d);
  }
  return out;
}

/// Tally from per-run link lists; a repeated pair within a run counts once.
inline LinkTally tally_links(std::span<const std::vector<AlignmentLink>> runs) {
  LinkTally tally;
  for (const auto& run : runs) {
    std::map<LinkKey, double> emitted;
    for (const auto& l : run) emitted.emplace(l.key(), l.confidence);
    tally.add_run(emitted);
  }
  return tally;
}

inline std::vector<AlignmentLink> retained_links(const std::vector<LinkDecision>& decisions) {
  std::vector<AlignmentLink> out;
  for (const auto& d : decisions) {
    if (d.retained) out.push_back(d.link);
  }
  return out;
}

}  // namespace gqa::consensus
