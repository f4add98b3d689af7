#pragma once

#include <array>
#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "smcov/parallel.hpp"
#include "smcov/state_machine.hpp"

namespace smcov {

inline constexpr std::size_t kFeatureCount = 6;

// Column order of FeatureRow::values().
inline constexpr std::array<const char*, kFeatureCount> kFeatureNames = {
    "NT", "NS", "FSSR", "CFS", "TP", "TPM"};

inline constexpr std::array<const char*, kFeatureCount> kFeatureLongNames = {
    "New Transitions", "New States",        "Final State Share Rate",
    "Count at Final State", "Trace Probability", "Transitions Probability Mean"};

// Trace features over the state machine, plus the error label when known.
struct FeatureRow {
  std::string trace_id;
  double nt = 0;    // distinct transitions never seen in training
  double ns = 0;    // distinct visited states outside the training states
  double fssr = 0;  // share of training finals in fState with the predicted label
  double cfs = 0;   // count of those finals
  double tp = 1;    // product of transition probabilities
  double tpm = 1;   // mean of transition probabilities
  bool error = false;

  std::array<double, kFeatureCount> values() const { return {nt, ns, fssr, cfs, tp, tpm}; }

  bool operator==(const FeatureRow&) const = default;
};

inline FeatureRow extract_features(const StateMachine& sm, const AbstractTrace& at) {
  FeatureRow row;
  row.trace_id = at.trace_id;
  if (at.predicted_label && at.true_label) {
    row.error = *at.predicted_label != *at.true_label;
  }

  std::set<Transition> unseen;
  std::set<StateId> new_states;
  double product = 1.0, sum = 0.0;
  const std::size_t steps = at.state_ids.size();
  for (std::size_t j = 0; j < steps; ++j) {
    if (sm.is_dynamic(at.state_ids[j])) new_states.insert(at.state_ids[j]);
    if (j + 1 == steps) break;
    const Transition edge{at.state_ids[j], at.state_ids[j + 1]};
    if (!sm.trans.count(edge)) unseen.insert(edge);
    const double p = transition_prob(sm, edge.first, edge.second);
    product *= p;
    sum += p;
  }
  row.nt = static_cast<double>(unseen.size());
  row.ns = static_cast<double>(new_states.size());
  if (steps > 1) {
    row.tp = product;
    row.tpm = sum / static_cast<double>(steps - 1);
  }

  const StateId final_state = at.final_state_id;
  if (at.predicted_label && !sm.is_dynamic(final_state)) {
    const auto same = sm.weight(*at.predicted_label, final_state);
    const auto total = sm.finals_in(final_state);
    row.cfs = static_cast<double>(same);
    row.fssr = total > 0 ? static_cast<double>(same) / static_cast<double>(total) : 0.0;
  }
  return row;
}

// Maps each trace independently (dynamic states are not shared between
// traces, matching one-input-at-a-time online use) and extracts features.
inline std::vector<FeatureRow> extract_features(const StateMachine& sm, const TraceSet& set,
                                                std::size_t workers = 1) {
  if (!set.empty() && set.dimension != sm.disc.input_dim()) {
    throw DataError("trace dimension " + std::to_string(set.dimension) +
                    " does not match state machine dimension " +
                    std::to_string(sm.disc.input_dim()));
  }
  std::vector<FeatureRow> rows(set.size());
  parallel_for(set.size(), workers, [&](std::size_t i) {
    rows[i] = extract_features(sm, map_trace(sm, set.traces[i]));
  });
  return rows;
}

inline nlohmann::json to_json(const FeatureRow& r) {
  nlohmann::json j = {{"id", r.trace_id}};
  const auto v = r.values();
  for (std::size_t f = 0; f < kFeatureCount; ++f) j[kFeatureNames[f]] = v[f];
  j["error"] = r.error;
  return j;
}

}  // namespace smcov
