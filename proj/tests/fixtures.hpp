#pragma once

#include <cstddef>
#include <string>
#include <tuple>
#include <vector>

#include "smcov/state_machine.hpp"
#include "smcov/trace.hpp"

namespace fixtures {

inline smcov::Trace make_trace(const std::string& id, std::vector<smcov::StateVector> states,
                               smcov::Label predicted, smcov::Label truth = std::nullopt) {
  smcov::Trace t;
  t.id = id;
  t.states = std::move(states);
  t.predicted_label = predicted;
  t.true_label = truth;
  return t;
}

inline smcov::TraceSet make_set(std::vector<smcov::Trace> traces, std::size_t labels = 2,
                                smcov::TraceRole role = smcov::TraceRole::training) {
  smcov::TraceSet s;
  s.traces = std::move(traces);
  s.label_count = labels;
  s.role = role;
  s.dimension = s.traces.empty() ? 0 : s.traces.front().states.front().size();
  return s;
}

// Six states on a line, 10 apart; state i (0-based) sits at (10 i, 0).
inline std::vector<smcov::StateVector> six_centroids() {
  std::vector<smcov::StateVector> c;
  for (int i = 0; i < 6; ++i) c.push_back({10.0 * i, 0.0});
  return c;
}

// (state index 0..5, label, count) triples become length-1 training traces
// sitting exactly on the state's centroid.
using Finals = std::vector<std::tuple<std::size_t, std::size_t, std::size_t>>;

inline smcov::StateMachine six_state_sm(const Finals& finals) {
  const auto centroids = six_centroids();
  std::vector<smcov::Trace> traces;
  for (const auto& [s, label, count] : finals) {
    for (std::size_t n = 0; n < count; ++n) {
      traces.push_back(make_trace("s" + std::to_string(s) + "-" + std::to_string(traces.size()),
                                  {centroids[s]}, label));
    }
  }
  auto set = make_set(std::move(traces));
  auto disc = smcov::make_centroid_discretizer(centroids, smcov::all_states(set));
  return smcov::build_sm(disc, set);
}

// The four worked state machines: blue = label 0, green = label 1, seven
// final states each, S1..S6 mapped to indices 0..5.
constexpr std::size_t kBlue = 0;
constexpr std::size_t kGreen = 1;

inline smcov::StateMachine sm_a() {
  return six_state_sm({{1, kBlue, 1}, {1, kGreen, 1}, {2, kBlue, 1}, {2, kGreen, 1},
                       {3, kBlue, 1}, {4, kGreen, 1}, {5, kGreen, 1}});
}
inline smcov::StateMachine sm_b() {
  return six_state_sm({{1, kBlue, 1}, {2, kGreen, 1}, {3, kBlue, 2}, {4, kGreen, 1},
                       {5, kGreen, 2}});
}
inline smcov::StateMachine sm_c() {
  return six_state_sm({{1, kBlue, 1}, {4, kBlue, 2}, {5, kGreen, 4}});
}
inline smcov::StateMachine sm_d() { return six_state_sm({{3, kBlue, 3}, {5, kGreen, 4}}); }

}  // namespace fixtures
