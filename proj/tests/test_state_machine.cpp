#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "smcov/state_machine.hpp"

using namespace smcov;
using fixtures::make_set;
using fixtures::make_trace;

TEST(BuildSm, SelfLoopCountsEachStep) {
  const std::vector<StateVector> c{{0.0}, {10.0}};
  auto set = make_set({make_trace("a", {{0.1}, {-0.1}, {0.0}}, 0)});
  set.dimension = 1;
  const auto sm = build_sm(make_centroid_discretizer(c, all_states(set)), set);
  ASSERT_EQ(sm.trans.size(), 1u);
  EXPECT_EQ(sm.trans.at({0, 0}), 2u);
  EXPECT_EQ(sm.visits[0], 3u);
  EXPECT_EQ(sm.hist[0][0], 1u);
  EXPECT_DOUBLE_EQ(transition_prob(sm, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(transition_prob(sm, 1, 0), 0.0);
}

TEST(BuildSm, SixStateFixture) {
  const auto b = fixtures::sm_b();
  EXPECT_EQ(b.final_states().size(), 5u);
  EXPECT_EQ(b.total_finals(), 7u);
  EXPECT_EQ(b.finals_in(0), 0u);
}

TEST(BuildSm, ConservationOnRandomData) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 3.0);
  std::uniform_int_distribution<int> len(1, 6), lab(0, 2);
  std::vector<Trace> traces;
  std::size_t steps = 0;
  for (int i = 0; i < 200; ++i) {
    std::vector<StateVector> states(len(rng));
    for (auto& s : states) s = {g(rng), g(rng)};
    steps += states.size();
    traces.push_back(make_trace("t" + std::to_string(i), states, lab(rng)));
  }
  auto set = make_set(traces, 3);
  ExtractOptions opt;
  opt.k = 7;
  opt.seed = 1;
  const auto sm = extract(set, opt);
  EXPECT_EQ(sm.total_finals(), 200u);
  std::uint64_t visits = 0, trans = 0;
  for (auto v : sm.visits) visits += v;
  for (const auto& [e, c] : sm.trans) trans += c;
  EXPECT_EQ(visits, steps);
  EXPECT_EQ(trans, steps - 200);
  for (StateId s = 0; s < sm.training_state_count(); ++s) {
    if (sm.outgoing[s] == 0) continue;
    double total = 0.0;
    for (StateId t = 0; t < sm.training_state_count(); ++t) total += transition_prob(sm, s, t);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  // Training vectors always land in a training state.
  for (const auto& t : set.traces) {
    const auto at = map_trace(sm, t);
    for (StateId s : at.state_ids) EXPECT_FALSE(sm.is_dynamic(s));
  }
}

TEST(MapTrace, CentroidAndFarAway) {
  auto sm = fixtures::sm_b();
  const auto c = fixtures::six_centroids();
  const auto at = map_trace(sm, make_trace("x", {c[2], c[4]}, 0));
  EXPECT_EQ(at.state_ids, (std::vector<StateId>{2, 4}));
  EXPECT_EQ(at.final_state_id, 4u);

  const double r = sm.disc.centroid.radii[5];
  auto far = map_trace(sm, make_trace("y", {{50.0 + 10.0 * r, 0.0}}, 0), false);
  EXPECT_TRUE(sm.is_dynamic(far.final_state_id));
  EXPECT_TRUE(far.is_new[0]);
  EXPECT_TRUE(sm.dynamic.empty());

  map_trace(sm, make_trace("y", {{50.0 + 10.0 * r, 0.0}}, 0), true);
  EXPECT_EQ(sm.dynamic.size(), 1u);
  // A nearby vector reuses the persisted dynamic state.
  const auto again = map_trace(sm, make_trace("z", {{50.0 + 10.0 * r + 0.1, 0.0}}, 0));
  EXPECT_EQ(again.final_state_id, sm.training_state_count());
  EXPECT_TRUE(again.is_new[0]);  // still a dynamic state
  EXPECT_EQ(sm.dynamic.size(), 1u);
}

TEST(MapSuite, SharesRegistryWithinSuite) {
  const auto sm = fixtures::sm_b();
  auto suite = make_set({make_trace("a", {{500.0, 0.0}}, 0), make_trace("b", {{500.5, 0.0}}, 0)},
                        2, TraceRole::test);
  const auto out = map_suite(sm, suite);
  EXPECT_EQ(out[0].final_state_id, out[1].final_state_id);
  EXPECT_TRUE(sm.dynamic.empty());
}

TEST(Radii, NeighbourRuleAndFarthestPoint) {
  const std::vector<StateVector> c{{0.0}, {4.0}, {10.0}};
  const auto r = centroid_radii(c, {{0.0}, {4.0}, {10.0}}, 1);
  EXPECT_DOUBLE_EQ(r[0], 2.0);
  EXPECT_DOUBLE_EQ(r[1], 2.0);
  EXPECT_DOUBLE_EQ(r[2], 3.0);
  const auto r2 = centroid_radii(c, {{-7.0}}, 8);
  EXPECT_DOUBLE_EQ(r2[0], 7.0);
  EXPECT_DOUBLE_EQ(r2[1], 3.0);
}

TEST(Grid, OccupiedCellsOnly) {
  const std::vector<StateVector> pts{{0.0, 0.0}, {1.0, 1.0}, {0.05, 0.05}, {0.95, 0.0}};
  const auto d = fit_grid(pts, 2);
  EXPECT_EQ(d.state_count(), 3u);
  auto set = make_set({make_trace("a", {pts[0], pts[1]}, 0), make_trace("b", {pts[2], pts[3]}, 1)});
  const auto sm = build_sm(d, set);
  const auto at = map_trace(sm, make_trace("c", {{0.1, 0.9}}, 0));
  EXPECT_TRUE(sm.is_dynamic(at.final_state_id));
  const auto at2 = map_trace(sm, make_trace("d", {{0.9, 0.9}}, 0));
  EXPECT_FALSE(sm.is_dynamic(at2.final_state_id));
}

TEST(BuildSm, Errors) {
  auto set = make_set({make_trace("a", {{0.0, 0.0}}, 0)}, 2, TraceRole::test);
  const auto d = make_centroid_discretizer(fixtures::six_centroids(), all_states(set));
  EXPECT_THROW(build_sm(d, set), DataError);
  set.role = TraceRole::training;
  set.traces[0].predicted_label.reset();
  EXPECT_THROW(build_sm(d, set), DataError);
  EXPECT_THROW(map_trace(fixtures::sm_a(), make_trace("x", {{1.0}}, 0)), DataError);
}

TEST(StateMachineJson, RoundTrip) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Trace> traces;
  for (int i = 0; i < 50; ++i) {
    traces.push_back(make_trace("t" + std::to_string(i),
                                {{g(rng), g(rng), g(rng)}, {g(rng), g(rng), g(rng)}}, i % 2));
  }
  const auto set = make_set(traces);
  for (auto method : {ExtractMethod::kmeans, ExtractMethod::grid}) {
    ExtractOptions opt;
    opt.method = method;
    opt.k = 5;
    opt.grid_cells = 3;
    opt.projection = ProjectionKind::pca;
    opt.projection_dim = 2;
    const auto sm = extract(set, opt);
    const auto back = state_machine_from_json(to_json(sm));
    EXPECT_EQ(back.disc, sm.disc);
    EXPECT_EQ(back.hist, sm.hist);
    EXPECT_EQ(back.trans, sm.trans);
    EXPECT_EQ(back.visits, sm.visits);
    EXPECT_EQ(back.outgoing, sm.outgoing);
    EXPECT_EQ(to_json(back).dump(), to_json(sm).dump());
  }
  EXPECT_THROW(state_machine_from_json(nlohmann::json::object()), DataError);
}
