#pragma once

// Independent restatements used as test oracles. They share no code with
// the library beyond the data types.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "safealign/sample.hpp"

namespace safealign::testing {

struct Thresholds {
  double ppl;
  double response;
  double instruction;
};

/// Nearest rank: the value at 1-based position ceil(p/100 * n) of the sorted sample.
inline double oracle_percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  std::size_t rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size()) / 100.0));
  if (rank < 1) rank = 1;
  if (rank > v.size()) rank = v.size();
  return v[rank - 1];
}

/// Each predicate evaluated on its own; a missing feature fails its predicate.
inline bool oracle_keep(const AlignmentSample& s, const Thresholds& t) {
  if (!s.features) return false;
  const auto& f = *s.features;
  const bool ppl_ok = f.prompt_ppl.has_value() && *f.prompt_ppl <= t.ppl;
  bool resp_ok = false;
  if (f.response_safety && !f.response_safety->empty()) {
    double best = f.response_safety->front();
    for (double x : *f.response_safety) best = x > best ? x : best;
    resp_ok = best >= t.response;
  }
  const bool instr_ok = f.instruction_safety.has_value() && *f.instruction_safety <= t.instruction;
  return ppl_ok && resp_ok && instr_ok;
}

/// Ids kept by the three-predicate filter, input order.
inline std::vector<std::string> oracle_select(const std::vector<AlignmentSample>& samples, const Thresholds& t) {
  std::vector<std::string> out;
  for (const auto& s : samples) {
    if (oracle_keep(s, t)) out.push_back(s.id);
  }
  return out;
}

}  // namespace safealign::testing
