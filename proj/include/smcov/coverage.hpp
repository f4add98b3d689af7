#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "smcov/error.hpp"
#include "smcov/state_machine.hpp"

namespace smcov {

enum class Criterion {
  new_fs,
  out_fs,
  basic_fs,
  basic_lfs,
  weighted_basic_lfs,
  weighted_lfs,
  basic_s,
  weighted_s,
  out_s,
  basic_t,
  weighted_t,
};

inline constexpr std::array<Criterion, 6> kFinalStateCriteria = {
    Criterion::new_fs,    Criterion::out_fs,
    Criterion::basic_fs,  Criterion::basic_lfs,
    Criterion::weighted_basic_lfs, Criterion::weighted_lfs};

inline constexpr std::array<Criterion, 5> kStateTransitionCriteria = {
    Criterion::basic_s, Criterion::weighted_s, Criterion::out_s, Criterion::basic_t,
    Criterion::weighted_t};

inline constexpr std::array<Criterion, 11> kAllCriteria = {
    Criterion::new_fs,    Criterion::out_fs,     Criterion::basic_fs,
    Criterion::basic_lfs, Criterion::weighted_basic_lfs, Criterion::weighted_lfs,
    Criterion::basic_s,   Criterion::weighted_s, Criterion::out_s,
    Criterion::basic_t,   Criterion::weighted_t};

inline const char* to_string(Criterion c) {
  switch (c) {
    case Criterion::new_fs: return "NewFSCov";
    case Criterion::out_fs: return "OutFSCov";
    case Criterion::basic_fs: return "BasicFSCov";
    case Criterion::basic_lfs: return "BasicLFSCov";
    case Criterion::weighted_basic_lfs: return "WeightedBasicLFSCov";
    case Criterion::weighted_lfs: return "WeightedLFSCov";
    case Criterion::basic_s: return "BasicSCov";
    case Criterion::weighted_s: return "WeightedSCov";
    case Criterion::out_s: return "OutSCov";
    case Criterion::basic_t: return "BasicTCov";
    case Criterion::weighted_t: return "WeightedTCov";
  }
  return "?";
}

inline Criterion parse_criterion(const std::string& name) {
  for (auto c : kAllCriteria) {
    if (name == to_string(c)) return c;
  }
  throw UsageError("unknown coverage criterion '" + name + "'");
}

// Criteria reported as raw counts or sums rather than ratios in [0, 1].
inline bool is_unbounded(Criterion c) {
  return c == Criterion::out_fs || c == Criterion::weighted_lfs || c == Criterion::out_s;
}

struct CriterionValue {
  double value = 0.0;
  double numerator = 0.0;
  double denominator = 0.0;  // 0 for counts and for undefined ratios
  bool defined = true;
};

struct CoverageReport {
  std::string suite_id;
  std::map<Criterion, CriterionValue> values;
  std::size_t dynamic_states_created = 0;
  std::size_t trace_count = 0;

  double operator[](Criterion c) const { return values.at(c).value; }
};

using LabelState = std::pair<std::size_t, StateId>;

// Mapping of a test suite onto an SM with a suite-local dynamic registry.
struct SuiteMapping {
  std::vector<AbstractTrace> traces;
  std::size_t dynamic_states_created = 0;
};

inline SuiteMapping map_suite_with_registry(const StateMachine& sm, const TraceSet& suite) {
  if (!suite.empty() && suite.dimension != sm.disc.input_dim()) {
    throw DataError("suite dimension " + std::to_string(suite.dimension) +
                    " does not match state machine dimension " +
                    std::to_string(sm.disc.input_dim()));
  }
  std::vector<DynamicState> registry;
  SuiteMapping m;
  m.traces.reserve(suite.size());
  for (const auto& t : suite.traces) m.traces.push_back(detail::map_with(sm, t, registry));
  m.dynamic_states_created = registry.size();
  return m;
}

// SMLFS: (label, state) pairs with at least one training final state.
inline std::set<LabelState> training_label_states(const StateMachine& sm) {
  std::set<LabelState> out;
  for (StateId s = 0; s < sm.training_state_count(); ++s) {
    for (std::size_t l = 0; l < sm.label_count; ++l) {
      if (sm.hist[s][l] > 0) out.insert({l, s});
    }
  }
  return out;
}

inline std::set<Transition> trace_transitions(const AbstractTrace& at) {
  std::set<Transition> out;
  for (std::size_t j = 0; j + 1 < at.state_ids.size(); ++j) {
    out.insert({at.state_ids[j], at.state_ids[j + 1]});
  }
  return out;
}

namespace detail {

inline CriterionValue ratio(double num, double den) {
  if (den == 0.0) return {0.0, num, 0.0, false};
  return {num / den, num, den, true};
}

inline CriterionValue count(double n) { return {n, n, 0.0, true}; }

inline std::size_t require_label(const AbstractTrace& at) {
  if (!at.predicted_label) {
    throw DataError("test trace '" + at.trace_id + "' has a null predicted label");
  }
  return *at.predicted_label;
}

}  // namespace detail

// The six final-state criteria over an already mapped suite.
inline CoverageReport final_state_coverage(const StateMachine& sm, const SuiteMapping& m) {
  const std::size_t k = sm.training_state_count();
  const auto smfs = sm.final_states();
  if (smfs.empty()) {
    throw DataError("BasicFSCov: the state machine has no final states (|SMFS| = 0)");
  }
  const auto smlfs = training_label_states(sm);

  std::set<StateId> smfs_test;
  std::set<LabelState> smlfs_test;
  for (const auto& at : m.traces) {
    smfs_test.insert(at.final_state_id);
    smlfs_test.insert({detail::require_label(at), at.final_state_id});
  }

  std::size_t new_finals = 0, out_finals = 0, basic_finals = 0;
  for (StateId s : smfs_test) {
    if (s >= k) {
      ++out_finals;
    } else if (smfs.count(s)) {
      ++basic_finals;
    } else {
      ++new_finals;
    }
  }
  std::size_t shared_pairs = 0;
  double shared_weight = 0.0, total_weight = 0.0;
  for (const auto& [l, s] : smlfs) {
    const double w = static_cast<double>(sm.hist[s][l]);
    total_weight += w;
    if (smlfs_test.count({l, s})) {
      ++shared_pairs;
      shared_weight += w;
    }
  }
  double inverse_weights = 0.0;
  for (const auto& [l, s] : smlfs_test) {
    inverse_weights += 1.0 / (static_cast<double>(sm.weight(l, s)) + 1.0);
  }

  CoverageReport r;
  r.trace_count = m.traces.size();
  r.dynamic_states_created = m.dynamic_states_created;
  r.values[Criterion::new_fs] =
      detail::ratio(static_cast<double>(new_finals), static_cast<double>(k - smfs.size()));
  r.values[Criterion::out_fs] = detail::count(static_cast<double>(out_finals));
  r.values[Criterion::basic_fs] =
      detail::ratio(static_cast<double>(basic_finals), static_cast<double>(smfs.size()));
  r.values[Criterion::basic_lfs] =
      detail::ratio(static_cast<double>(shared_pairs), static_cast<double>(smlfs.size()));
  r.values[Criterion::weighted_basic_lfs] = detail::ratio(shared_weight, total_weight);
  r.values[Criterion::weighted_lfs] = detail::count(inverse_weights);
  return r;
}

// The five state/transition criteria over an already mapped suite.
inline CoverageReport state_transition_coverage(const StateMachine& sm,
                                                const SuiteMapping& m) {
  const std::size_t k = sm.training_state_count();
  std::set<StateId> visited;
  std::set<Transition> taken;
  for (const auto& at : m.traces) {
    visited.insert(at.state_ids.begin(), at.state_ids.end());
    const auto t = trace_transitions(at);
    taken.insert(t.begin(), t.end());
  }

  std::size_t basic_states = 0, out_states = 0;
  double covered_state_weight = 0.0, total_state_weight = 0.0;
  for (StateId s = 0; s < k; ++s) {
    const double w = 1.0 / (static_cast<double>(sm.visits[s]) + 1.0);
    total_state_weight += w;
    if (visited.count(s)) {
      ++basic_states;
      covered_state_weight += w;
    }
  }
  for (StateId s : visited) out_states += s >= k ? 1 : 0;

  std::size_t basic_transitions = 0;
  double covered_trans_weight = 0.0, total_trans_weight = 0.0;
  for (const auto& [edge, c] : sm.trans) {
    const double w = 1.0 / (static_cast<double>(c) + 1.0);
    total_trans_weight += w;
    if (taken.count(edge)) {
      ++basic_transitions;
      covered_trans_weight += w;
    }
  }

  CoverageReport r;
  r.trace_count = m.traces.size();
  r.dynamic_states_created = m.dynamic_states_created;
  r.values[Criterion::basic_s] =
      detail::ratio(static_cast<double>(basic_states), static_cast<double>(k));
  r.values[Criterion::weighted_s] = detail::ratio(covered_state_weight, total_state_weight);
  r.values[Criterion::out_s] = detail::count(static_cast<double>(out_states));
  r.values[Criterion::basic_t] = detail::ratio(static_cast<double>(basic_transitions),
                                               static_cast<double>(sm.trans.size()));
  r.values[Criterion::weighted_t] = detail::ratio(covered_trans_weight, total_trans_weight);
  return r;
}

inline void require_test_role(const TraceSet& suite) {
  if (suite.role != TraceRole::test) {
    throw DataError("coverage needs a test-role suite");
  }
}

inline CoverageReport evaluate_suite(const StateMachine& sm, const TraceSet& suite) {
  require_test_role(suite);
  auto r = final_state_coverage(sm, map_suite_with_registry(sm, suite));
  r.suite_id = suite.id;
  return r;
}

inline CoverageReport evaluate_deepstellar(const StateMachine& sm, const TraceSet& suite) {
  require_test_role(suite);
  auto r = state_transition_coverage(sm, map_suite_with_registry(sm, suite));
  r.suite_id = suite.id;
  return r;
}

// All eleven criteria from a single mapping pass.
inline CoverageReport evaluate_all(const StateMachine& sm, const TraceSet& suite) {
  require_test_role(suite);
  const auto m = map_suite_with_registry(sm, suite);
  auto r = final_state_coverage(sm, m);
  for (auto& [c, v] : state_transition_coverage(sm, m).values) r.values[c] = v;
  r.suite_id = suite.id;
  return r;
}

inline nlohmann::json to_json(const CoverageReport& r) {
  nlohmann::json criteria = nlohmann::json::object();
  for (const auto& [c, v] : r.values) {
    criteria[to_string(c)] = {{"value", v.value},
                              {"numerator", v.numerator},
                              {"denominator", v.denominator},
                              {"defined", v.defined}};
  }
  return {{"suite_id", r.suite_id},
          {"trace_count", r.trace_count},
          {"dynamic_states_created", r.dynamic_states_created},
          {"criteria", criteria}};
}

}  // namespace smcov
