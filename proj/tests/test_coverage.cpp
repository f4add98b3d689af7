#include <gtest/gtest.h>

#include "coverage_oracle.hpp"
#include "fixtures.hpp"
#include "smcov/coverage.hpp"

using namespace smcov;
using fixtures::make_set;
using fixtures::make_trace;

TEST(Coverage, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto in = oracle::random_instance(seed);
    const auto expected = oracle::coverage(in.sm.disc.centroid.centroids,
                                           in.sm.disc.centroid.radii, in.training, in.suite);
    const auto r = evaluate_all(in.sm, in.suite);
    for (const auto& [c, v] : expected) EXPECT_EQ(r[c], v) << "seed " << seed << " " << to_string(c);
  }
}

TEST(Coverage, TrainingDataAsSuite) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto in = oracle::random_instance(seed);
    auto suite = in.training;
    suite.role = TraceRole::test;
    const auto r = evaluate_all(in.sm, suite);
    EXPECT_EQ(r[Criterion::new_fs], 0.0);
    EXPECT_EQ(r[Criterion::out_fs], 0.0);
    EXPECT_EQ(r[Criterion::basic_fs], 1.0);
    EXPECT_EQ(r[Criterion::basic_lfs], 1.0);
    EXPECT_EQ(r[Criterion::weighted_basic_lfs], 1.0);
    EXPECT_EQ(r[Criterion::basic_t], in.sm.trans.empty() ? 0.0 : 1.0);
    EXPECT_EQ(r[Criterion::out_s], 0.0);
    EXPECT_EQ(r.dynamic_states_created, 0u);
  }
}

TEST(Coverage, FarAwayFinals) {
  const auto sm = fixtures::sm_b();
  auto suite = make_set({make_trace("a", {{0.0, 0.0}, {1000.0, 0.0}}, 0),
                         make_trace("b", {{1000.5, 0.0}}, 1),
                         make_trace("c", {{-2000.0, 0.0}}, 1)},
                        2, TraceRole::test);
  const auto r = evaluate_all(sm, suite);
  EXPECT_EQ(r[Criterion::out_fs], 2.0);
  EXPECT_EQ(r[Criterion::basic_fs], 0.0);
  EXPECT_EQ(r[Criterion::out_s], 2.0);
  EXPECT_EQ(r.dynamic_states_created, 2u);
  // Three pairs, none seen in training: each weighs 1/(0+1).
  EXPECT_EQ(r[Criterion::weighted_lfs], 3.0);
}

TEST(Coverage, WorkedFixture) {
  const auto sm = fixtures::sm_a();
  const auto c = fixtures::six_centroids();
  auto suite = make_set({make_trace("a", {c[0]}, 0), make_trace("b", {c[1]}, 0),
                         make_trace("c", {c[3]}, 1)},
                        2, TraceRole::test);
  const auto r = evaluate_all(sm, suite);
  EXPECT_DOUBLE_EQ(r[Criterion::new_fs], 1.0);        // S1 is the only non-final state
  EXPECT_DOUBLE_EQ(r[Criterion::basic_fs], 2.0 / 5.0);
  EXPECT_DOUBLE_EQ(r[Criterion::basic_lfs], 1.0 / 7.0);  // only (blue, S2) is shared
  EXPECT_DOUBLE_EQ(r[Criterion::weighted_basic_lfs], 1.0 / 7.0);
  EXPECT_DOUBLE_EQ(r[Criterion::weighted_lfs], 1.0 + 0.5 + 1.0);
}

TEST(Coverage, EmptySuiteIsAllZero) {
  const auto sm = fixtures::sm_a();
  auto suite = make_set({}, 2, TraceRole::test);
  const auto r = evaluate_all(sm, suite);
  for (auto c : kAllCriteria) EXPECT_EQ(r[c], 0.0) << to_string(c);
}

TEST(Coverage, MonotoneInSuite) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto in = oracle::random_instance(seed + 1000);
    auto partial = in.suite;
    partial.traces.clear();
    auto prev = evaluate_all(in.sm, partial);
    for (const auto& t : in.suite.traces) {
      partial.traces.push_back(t);
      const auto next = evaluate_all(in.sm, partial);
      for (auto c : kAllCriteria) EXPECT_GE(next[c], prev[c]) << to_string(c);
      prev = next;
    }
  }
}

TEST(Coverage, LabelPairsProjectIntoCoveredFinals) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto in = oracle::random_instance(seed + 500);
    const auto m = map_suite_with_registry(in.sm, in.suite);
    const auto smfs = in.sm.final_states();
    const auto smlfs = training_label_states(in.sm);
    std::set<StateId> finals;
    for (const auto& at : m.traces) finals.insert(at.final_state_id);
    bool all_pairs = true;
    for (const auto& [l, s] : smlfs) {
      bool hit = false;
      for (const auto& at : m.traces) hit |= at.final_state_id == s && *at.predicted_label == l;
      if (hit) EXPECT_TRUE(finals.count(s) && smfs.count(s));
      all_pairs &= hit;
    }
    const auto r = evaluate_all(in.sm, in.suite);
    EXPECT_EQ(r[Criterion::weighted_basic_lfs] == 1.0, all_pairs);
  }
}

TEST(Coverage, Errors) {
  auto sm = fixtures::sm_a();
  auto suite = make_set({make_trace("a", {{0.0, 0.0}}, 0)}, 2, TraceRole::training);
  EXPECT_THROW(evaluate_all(sm, suite), DataError);
  suite.role = TraceRole::test;
  suite.traces[0].predicted_label.reset();
  EXPECT_THROW(evaluate_suite(sm, suite), DataError);
  auto wrong_dim = make_set({make_trace("a", {{0.0}}, 0)}, 2, TraceRole::test);
  EXPECT_THROW(evaluate_all(sm, wrong_dim), DataError);
  for (auto& row : sm.hist) std::fill(row.begin(), row.end(), 0);
  suite.traces[0].predicted_label = 0;
  EXPECT_THROW(evaluate_suite(sm, suite), DataError);
  EXPECT_THROW(parse_criterion("Nope"), UsageError);
}
