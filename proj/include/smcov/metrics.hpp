#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "smcov/error.hpp"
#include "smcov/state_machine.hpp"

namespace smcov {

// Per-state label histograms of training final states: hist[state][label].
using Histograms = std::vector<std::vector<std::uint64_t>>;

struct SmScore {
  double purity = 0.0;
  double richness = 0.0;
  double goodness = 0.0;
  double scale = 0.0;
  std::size_t states_with_finals = 0;
  std::size_t state_count = 0;
  std::uint64_t total_finals = 0;
  int exponent = 10;

  // Fewer final-bearing states than labels cannot discriminate every label.
  bool lacks_discrimination() const { return scale < 1.0; }
};

namespace detail {

inline std::uint64_t row_total(const std::vector<std::uint64_t>& row) {
  std::uint64_t n = 0;
  for (auto c : row) n += c;
  return n;
}

}  // namespace detail

// Share of final states that carry their state's majority label.
inline double purity(const Histograms& hist) {
  std::uint64_t major = 0;
  std::uint64_t total = 0;
  for (const auto& row : hist) {
    if (!row.empty()) major += *std::max_element(row.begin(), row.end());
    total += detail::row_total(row);
  }
  if (total == 0) throw DataError("purity is undefined for a state machine with no final states");
  return static_cast<double>(major) / static_cast<double>(total);
}

inline std::size_t states_with_finals(const Histograms& hist) {
  std::size_t n = 0;
  for (const auto& row : hist) n += detail::row_total(row) > 0 ? 1 : 0;
  return n;
}

// Mean number of final states per final-bearing state.
inline double richness(const Histograms& hist) {
  std::uint64_t total = 0;
  for (const auto& row : hist) total += detail::row_total(row);
  const std::size_t bearing = states_with_finals(hist);
  if (bearing == 0) {
    throw DataError("richness is undefined for a state machine with no final states");
  }
  return static_cast<double>(total) / static_cast<double>(bearing);
}

inline double goodness(double purity_value, double richness_value, int exponent = 10) {
  return std::pow(purity_value, exponent) * richness_value;
}

inline double goodness(const Histograms& hist, int exponent = 10) {
  return goodness(purity(hist), richness(hist), exponent);
}

inline double scale(const Histograms& hist, std::size_t label_count) {
  if (label_count == 0) throw DataError("scale needs at least one label");
  return static_cast<double>(states_with_finals(hist)) / static_cast<double>(label_count);
}

inline double purity(const StateMachine& sm) { return purity(sm.hist); }
inline double richness(const StateMachine& sm) { return richness(sm.hist); }
inline double goodness(const StateMachine& sm, int exponent = 10) {
  return goodness(sm.hist, exponent);
}
inline double scale(const StateMachine& sm) { return scale(sm.hist, sm.label_count); }

inline SmScore score(const Histograms& hist, std::size_t label_count, int exponent = 10) {
  SmScore s;
  s.exponent = exponent;
  s.purity = purity(hist);
  s.richness = richness(hist);
  s.goodness = goodness(s.purity, s.richness, exponent);
  s.scale = scale(hist, label_count);
  s.states_with_finals = states_with_finals(hist);
  s.state_count = hist.size();
  for (const auto& row : hist) s.total_finals += detail::row_total(row);
  return s;
}

inline SmScore score(const StateMachine& sm, int exponent = 10) {
  return score(sm.hist, sm.label_count, exponent);
}

inline nlohmann::json to_json(const SmScore& s) {
  return {{"purity", s.purity},
          {"richness", s.richness},
          {"goodness", s.goodness},
          {"scale", s.scale},
          {"states_with_finals", s.states_with_finals},
          {"state_count", s.state_count},
          {"total_finals", s.total_finals},
          {"exponent", s.exponent},
          {"lacks_discrimination", s.lacks_discrimination()}};
}

}  // namespace smcov
