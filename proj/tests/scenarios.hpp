#pragma once

// Synthetic setups shared by the unit tests and the acceptance binary.

#include <cstdint>
#include <vector>

#include "smcov/decision_tree.hpp"
#include "smcov/features.hpp"
#include "smcov/significance.hpp"
#include "smcov/stats.hpp"
#include "smcov/synth.hpp"

namespace scenarios {

using namespace smcov;

// Error prediction: 8 centers, 3 of them label-mixed; errors 5x likelier at
// mixed or off-manifold finals.
struct PredictionRun {
  double eval_auc = 0.0;
  double train_auc = 0.0;
  std::vector<double> importances;
  DecisionTree tree;
};

inline synth::PlantedSource prediction_source(std::uint64_t seed) {
  synth::SourceOptions so;
  so.centers = 8;
  so.mixed_centers = 3;
  so.separation = 20.0;
  so.errors.base_rate = 0.19;
  so.errors.impurity_boost = 5.0;
  so.errors.out_of_boundary_boost = 5.0;
  so.seed = seed;
  return synth::make_source(so);
}

inline std::vector<bool> error_labels(const std::vector<FeatureRow>& rows) {
  std::vector<bool> y;
  for (const auto& r : rows) y.push_back(r.error);
  return y;
}

inline PredictionRun prediction_run(std::uint64_t seed, std::size_t workers = 1) {
  const auto src = prediction_source(seed);
  synth::GenerateOptions train;
  train.n_traces = 4000;
  train.workers = workers;
  const auto training = synth::generate(src, train);

  ExtractOptions eo;
  eo.k = src.center_count();
  eo.seed = seed;
  eo.workers = workers;
  const auto sm = extract(training.set, eo);

  auto held = [&](std::uint64_t stream) {
    synth::GenerateOptions o;
    o.n_traces = 3000;
    o.perturbation = 0.1;
    o.stream = stream;
    o.role = TraceRole::test;
    o.workers = workers;
    return extract_features(sm, synth::generate(src, o).set, workers);
  };
  const auto fit_rows = held(1);
  const auto eval_rows = held(2);

  PredictionRun r;
  r.tree = train_tree(fit_rows);
  r.importances = r.tree.importances;
  auto scores = [&](const std::vector<FeatureRow>& rows) {
    std::vector<double> s;
    for (const auto& row : rows) s.push_back(predict_error(r.tree, row));
    return s;
  };
  r.train_auc = stats::roc_auc(scores(fit_rows), error_labels(fit_rows)).auc;
  r.eval_auc = stats::roc_auc(scores(eval_rows), error_labels(eval_rows)).auc;
  return r;
}

// Criterion validation: training data on 8 pure centers, then a family of
// test suites whose perturbed walks end off-manifold with 5x the error rate.
struct KsSetup {
  StateMachine sm;
  std::vector<TraceSet> suites;
};

inline KsSetup ks_setup(std::uint64_t seed, double perturbation, std::size_t n_suites,
                        std::size_t suite_size, std::size_t centers = 8,
                        std::size_t workers = 1) {
  synth::SourceOptions so;
  so.centers = centers;
  so.separation = 20.0;
  so.errors.base_rate = 0.1;
  so.errors.out_of_boundary_boost = 5.0;
  so.seed = seed;
  const auto src = synth::make_source(so);
  synth::GenerateOptions train;
  train.n_traces = 2000;
  train.workers = workers;
  ExtractOptions eo;
  eo.k = centers;
  eo.seed = seed;
  eo.workers = workers;
  KsSetup s;
  s.sm = extract(synth::generate(src, train).set, eo);
  for (auto& g : synth::generate_suite_family(src, n_suites, suite_size, 8, perturbation, workers)) {
    s.suites.push_back(std::move(g.set));
  }
  return s;
}

}  // namespace scenarios
