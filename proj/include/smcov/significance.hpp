#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "smcov/coverage.hpp"
#include "smcov/error.hpp"
#include "smcov/parallel.hpp"
#include "smcov/state_machine.hpp"
#include "smcov/stats.hpp"

namespace smcov {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

// Training-side facts needed to decide which traces a criterion covers.
struct CoverageContext {
  std::set<StateId> smfs;
  std::set<LabelState> smlfs;
  double median_label_weight = 0.0;
  std::set<StateId> low_visit_states;
  std::set<Transition> low_count_transitions;

  explicit CoverageContext(const StateMachine& sm)
      : smfs(sm.final_states()), smlfs(training_label_states(sm)) {
    std::vector<double> w;
    for (const auto& [l, s] : smlfs) w.push_back(static_cast<double>(sm.hist[s][l]));
    median_label_weight = median(w);

    std::vector<double> visits(sm.visits.begin(), sm.visits.end());
    const double mv = median(visits);
    for (StateId s = 0; s < sm.visits.size(); ++s) {
      if (static_cast<double>(sm.visits[s]) <= mv) low_visit_states.insert(s);
    }

    std::vector<double> counts;
    for (const auto& [e, c] : sm.trans) counts.push_back(static_cast<double>(c));
    const double mc = median(counts);
    for (const auto& [e, c] : sm.trans) {
      if (static_cast<double>(c) <= mc) low_count_transitions.insert(e);
    }
  }
};

// Whether a mapped trace takes part in the region a criterion measures.
inline bool covers(const StateMachine& sm, const CoverageContext& ctx, const AbstractTrace& at,
                   Criterion c) {
  const StateId f = at.final_state_id;
  switch (c) {
    case Criterion::new_fs: return !ctx.smfs.count(f);
    case Criterion::out_fs: return sm.is_dynamic(f);
    case Criterion::basic_fs: return ctx.smfs.count(f) > 0;
    case Criterion::basic_lfs:
    case Criterion::weighted_basic_lfs:
      return at.predicted_label && ctx.smlfs.count({*at.predicted_label, f}) > 0;
    case Criterion::weighted_lfs:
      return at.predicted_label &&
             static_cast<double>(sm.weight(*at.predicted_label, f)) <= ctx.median_label_weight;
    case Criterion::basic_s:
      return std::any_of(at.state_ids.begin(), at.state_ids.end(),
                         [&](StateId s) { return !sm.is_dynamic(s); });
    case Criterion::weighted_s:
      return std::any_of(at.state_ids.begin(), at.state_ids.end(),
                         [&](StateId s) { return ctx.low_visit_states.count(s) > 0; });
    case Criterion::out_s:
      return std::any_of(at.state_ids.begin(), at.state_ids.end(),
                         [&](StateId s) { return sm.is_dynamic(s); });
    case Criterion::basic_t:
    case Criterion::weighted_t:
      for (std::size_t j = 0; j + 1 < at.state_ids.size(); ++j) {
        const Transition e{at.state_ids[j], at.state_ids[j + 1]};
        const bool hit = c == Criterion::basic_t ? sm.trans.count(e) > 0
                                                 : ctx.low_count_transitions.count(e) > 0;
        if (hit) return true;
      }
      return false;
  }
  return false;
}

struct SuiteAccuracy {
  std::string suite_id;
  double overall = 0.0;
  std::map<Criterion, std::optional<double>> covered;  // nullopt: empty subset
};

inline bool correct(const AbstractTrace& at) {
  if (!at.predicted_label || !at.true_label) {
    throw DataError("trace '" + at.trace_id + "' lacks a predicted or true label");
  }
  return *at.predicted_label == *at.true_label;
}

inline SuiteAccuracy suite_accuracy(const StateMachine& sm, const CoverageContext& ctx,
                                    const TraceSet& suite,
                                    const std::vector<Criterion>& criteria) {
  if (suite.empty()) throw DataError("suite '" + suite.id + "' is empty");
  const auto m = map_suite_with_registry(sm, suite);
  SuiteAccuracy acc;
  acc.suite_id = suite.id;
  std::size_t hits = 0;
  std::map<Criterion, std::pair<std::size_t, std::size_t>> tally;
  for (const auto& at : m.traces) {
    const bool ok = correct(at);
    hits += ok ? 1 : 0;
    for (auto c : criteria) {
      if (covers(sm, ctx, at, c)) {
        auto& [n, k] = tally[c];
        ++n;
        k += ok ? 1 : 0;
      }
    }
  }
  acc.overall = static_cast<double>(hits) / static_cast<double>(m.traces.size());
  for (auto c : criteria) {
    const auto it = tally.find(c);
    if (it == tally.end()) {
      acc.covered[c] = std::nullopt;
    } else {
      acc.covered[c] = static_cast<double>(it->second.second) /
                       static_cast<double>(it->second.first);
    }
  }
  return acc;
}

inline std::vector<SuiteAccuracy> suite_accuracies(const StateMachine& sm,
                                                   const std::vector<TraceSet>& suites,
                                                   const std::vector<Criterion>& criteria,
                                                   std::size_t workers = 1) {
  const CoverageContext ctx(sm);
  std::vector<SuiteAccuracy> out(suites.size());
  parallel_for(suites.size(), workers, [&](std::size_t i) {
    out[i] = suite_accuracy(sm, ctx, suites[i], criteria);
  });
  return out;
}

struct SignificanceResult {
  Criterion criterion = Criterion::new_fs;
  std::optional<stats::KsResult> ks;  // nullopt when fewer than 2 subsets are non-empty
  std::size_t non_empty_subsets = 0;
  double mean_overall = 0.0;
  double mean_covered = 0.0;

  bool significant(double alpha = 0.05) const { return ks && ks->p_value < alpha; }
};

inline SignificanceResult significance_from(const std::vector<SuiteAccuracy>& acc, Criterion c,
                                            const stats::KsOptions& options = {}) {
  SignificanceResult r;
  r.criterion = c;
  std::vector<double> a, b;
  for (const auto& s : acc) {
    a.push_back(s.overall);
    const auto it = s.covered.find(c);
    if (it != s.covered.end() && it->second) b.push_back(*it->second);
  }
  r.non_empty_subsets = b.size();
  for (double v : a) r.mean_overall += v / static_cast<double>(a.size());
  for (double v : b) r.mean_covered += v / static_cast<double>(b.size());
  if (b.size() >= 2) r.ks = stats::ks_two_sample(a, b, options);
  return r;
}

// KS test of per-suite accuracy against per-suite accuracy on the traces the
// criterion covers.
inline stats::KsResult criterion_significance(const StateMachine& sm,
                                              const std::vector<TraceSet>& suites, Criterion c,
                                              const stats::KsOptions& options = {},
                                              std::size_t workers = 1) {
  if (suites.size() < 2) throw DataError("criterion significance needs at least 2 suites");
  const auto r = significance_from(suite_accuracies(sm, suites, {c}, workers), c, options);
  if (!r.ks) {
    throw DataError(std::string(to_string(c)) + ": fewer than 2 suites have a non-empty covered subset (" +
                    std::to_string(r.non_empty_subsets) + ")");
  }
  return *r.ks;
}

inline std::vector<SignificanceResult> significance_matrix(
    const StateMachine& sm, const std::vector<TraceSet>& suites,
    const std::vector<Criterion>& criteria, const stats::KsOptions& options = {},
    std::size_t workers = 1) {
  if (suites.size() < 2) throw DataError("criterion significance needs at least 2 suites");
  const auto acc = suite_accuracies(sm, suites, criteria, workers);
  std::vector<SignificanceResult> out;
  for (auto c : criteria) out.push_back(significance_from(acc, c, options));
  return out;
}

inline nlohmann::json to_json(const SignificanceResult& r, double alpha = 0.05) {
  nlohmann::json j = {{"criterion", to_string(r.criterion)},
                      {"non_empty_subsets", r.non_empty_subsets},
                      {"mean_overall_accuracy", r.mean_overall},
                      {"mean_covered_accuracy", r.mean_covered},
                      {"significant", r.significant(alpha)}};
  if (r.ks) {
    j["d_statistic"] = r.ks->d_statistic;
    j["p_value"] = r.ks->p_value;
    j["n1"] = r.ks->n1;
    j["n2"] = r.ks->n2;
  } else {
    j["d_statistic"] = nullptr;
    j["p_value"] = nullptr;
  }
  return j;
}

}  // namespace smcov
