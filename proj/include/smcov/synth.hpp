#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "smcov/error.hpp"
#include "smcov/kmeans.hpp"
#include "smcov/parallel.hpp"
#include "smcov/trace.hpp"

namespace smcov::synth {

// Error probability = base_rate, times impurity_boost when the final center's
// majority-label share is below purity_threshold, times out_of_boundary_boost
// when the final state was pushed off-manifold; clamped to 1.
struct ErrorModel {
  double base_rate = 0.05;
  double impurity_boost = 1.0;
  double purity_threshold = 0.75;
  double out_of_boundary_boost = 1.0;
};

struct PlantedSource {
  std::uint64_t seed = 0;
  double noise_sigma = 0.1;
  std::vector<StateVector> centers;
  std::vector<double> initial;                 // start distribution over centers
  std::vector<std::vector<double>> transition;  // row-stochastic
  std::vector<std::vector<double>> label_dist;  // [center][label]
  ErrorModel errors;

  std::size_t center_count() const { return centers.size(); }
  std::size_t dimension() const { return centers.empty() ? 0 : centers.front().size(); }
  std::size_t label_count() const { return label_dist.empty() ? 0 : label_dist.front().size(); }

  double center_purity(std::size_t c) const {
    return *std::max_element(label_dist[c].begin(), label_dist[c].end());
  }

  double error_probability(std::size_t final_center, bool out_of_boundary) const {
    double p = errors.base_rate;
    if (center_purity(final_center) < errors.purity_threshold) p *= errors.impurity_boost;
    if (out_of_boundary) p *= errors.out_of_boundary_boost;
    return std::clamp(p, 0.0, 1.0);
  }
};

namespace detail {

inline void check_distribution(const std::vector<double>& row, const std::string& what) {
  double sum = 0.0;
  for (double v : row) {
    if (!std::isfinite(v) || v < 0.0) throw DataError(what + " has a negative or non-finite entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DataError(what + " does not sum to 1");
}

}  // namespace detail

inline void validate(const PlantedSource& src) {
  const std::size_t k = src.center_count();
  if (k == 0) throw DataError("planted source has no centers");
  if (src.dimension() == 0) throw DataError("planted source has zero dimension");
  if (!(src.noise_sigma >= 0.0)) throw DataError("noise sigma must be non-negative");
  if (src.initial.size() != k) throw DataError("initial distribution size mismatch");
  detail::check_distribution(src.initial, "initial distribution");
  if (src.transition.size() != k) throw DataError("degenerate transition matrix: wrong row count");
  for (std::size_t c = 0; c < k; ++c) {
    if (src.transition[c].size() != k) {
      throw DataError("degenerate transition matrix: row " + std::to_string(c) + " has wrong width");
    }
    detail::check_distribution(src.transition[c],
                               "degenerate transition matrix: row " + std::to_string(c));
  }
  if (src.label_dist.size() != k) throw DataError("label distribution count mismatch");
  if (src.label_count() < 2) throw DataError("planted source needs at least 2 labels");
  for (std::size_t c = 0; c < k; ++c) {
    if (src.label_dist[c].size() != src.label_count()) {
      throw DataError("label distribution width mismatch");
    }
    detail::check_distribution(src.label_dist[c], "label distribution of center " + std::to_string(c));
  }
  const auto& e = src.errors;
  if (!(e.base_rate >= 0.0 && e.base_rate <= 1.0) || !(e.impurity_boost >= 0.0) ||
      !(e.out_of_boundary_boost >= 0.0)) {
    throw DataError("error model parameters out of range");
  }
}

struct SourceOptions {
  std::size_t centers = 8;
  std::size_t dimension = 2;
  std::size_t label_count = 2;
  std::size_t mixed_centers = 0;  // centers with a uniform label distribution
  double noise_sigma = 0.1;
  double separation = 8.0;        // minimum center distance, in units of sigma
  ErrorModel errors;
  std::uint64_t seed = 0;
};

// Centers are drawn on a hypercube scaled to the requested separation; pure
// centers put all label mass on one label, cycling through the labels.
inline PlantedSource make_source(const SourceOptions& opt) {
  if (opt.centers == 0 || opt.dimension == 0) throw UsageError("centers and dimension must be positive");
  if (opt.label_count < 2) throw UsageError("need at least 2 labels");
  if (opt.mixed_centers > opt.centers) throw UsageError("more mixed centers than centers");
  if (!(opt.noise_sigma > 0.0)) throw UsageError("noise sigma must be positive");

  PlantedSource src;
  src.seed = opt.seed;
  src.noise_sigma = opt.noise_sigma;
  src.errors = opt.errors;
  std::mt19937_64 rng(opt.seed);

  const double min_dist = opt.separation * opt.noise_sigma;
  const double per_axis = std::ceil(std::pow(static_cast<double>(opt.centers),
                                             1.0 / static_cast<double>(opt.dimension)));
  const double side = 2.0 * min_dist * per_axis;
  std::uniform_real_distribution<double> coord(0.0, side);
  std::size_t attempts = 0;
  while (src.centers.size() < opt.centers) {
    if (++attempts > 100000) throw DataError("could not place centers with the requested separation");
    StateVector c(opt.dimension);
    for (double& v : c) v = coord(rng);
    const bool far = std::all_of(src.centers.begin(), src.centers.end(),
                                 [&](const StateVector& o) { return distance(o, c) >= min_dist; });
    if (far) src.centers.push_back(std::move(c));
  }

  const std::size_t k = opt.centers;
  std::uniform_real_distribution<double> unit(0.5, 1.5);
  src.initial.assign(k, 1.0 / static_cast<double>(k));
  src.transition.assign(k, std::vector<double>(k, 0.0));
  for (auto& row : src.transition) {
    double sum = 0.0;
    for (double& v : row) sum += (v = unit(rng));
    for (double& v : row) v /= sum;
  }

  src.label_dist.assign(k, std::vector<double>(opt.label_count, 0.0));
  for (std::size_t c = 0; c < k; ++c) {
    if (c >= k - opt.mixed_centers) {
      std::fill(src.label_dist[c].begin(), src.label_dist[c].end(),
                1.0 / static_cast<double>(opt.label_count));
    } else {
      src.label_dist[c][c % opt.label_count] = 1.0;
    }
  }
  validate(src);
  return src;
}

struct GenerateOptions {
  std::size_t n_traces = 100;
  std::size_t t_len = 8;
  double noise_sigma = -1.0;  // negative: use the source's sigma
  double perturbation = 0.0;  // share of walks whose tail leaves the manifold
  std::uint64_t stream = 0;   // distinguishes independent sets from one source
  TraceRole role = TraceRole::training;
  std::string id;
  std::size_t workers = 1;
};

// Planted facts for one generated trace.
struct TraceTruth {
  std::vector<std::size_t> centers;
  std::vector<bool> off_manifold;
  bool error = false;
};

struct Generated {
  TraceSet set;
  std::vector<TraceTruth> truth;
};

namespace detail {

inline std::size_t sample(const std::vector<double>& dist, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    acc += dist[i];
    if (u < acc) return i;
  }
  return dist.size() - 1;
}

// Distance from any center's own position that clears every center's region.
inline double off_manifold_offset(const PlantedSource& src) {
  double span = 0.0;
  for (const auto& a : src.centers) {
    for (const auto& b : src.centers) span = std::max(span, distance(a, b));
  }
  return 2.0 * span + 40.0 * src.noise_sigma + 1.0;
}

}  // namespace detail

// Generates one trace; its RNG is seeded from (source seed, stream, index)
// only, so results do not depend on which worker runs it.
inline std::pair<Trace, TraceTruth> generate_trace(const PlantedSource& src,
                                                   const GenerateOptions& opt,
                                                   std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(src.seed), static_cast<std::uint32_t>(src.seed >> 32),
                    static_cast<std::uint32_t>(opt.stream),
                    static_cast<std::uint32_t>(opt.stream >> 32),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(index) >> 32)};
  std::mt19937_64 rng(seq);
  const double sigma = opt.noise_sigma < 0.0 ? src.noise_sigma : opt.noise_sigma;
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  TraceTruth truth;
  std::size_t c = detail::sample(src.initial, rng);
  for (std::size_t j = 0; j < opt.t_len; ++j) {
    if (j > 0) c = detail::sample(src.transition[c], rng);
    truth.centers.push_back(c);
  }

  // Perturbed walks leave the manifold for their last quarter (at least the
  // final step), all around one far-away anchor.
  truth.off_manifold.assign(opt.t_len, false);
  StateVector anchor;
  if (opt.perturbation > 0.0 && unit(rng) < opt.perturbation) {
    StateVector dir(src.dimension());
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : dir) {
        v = noise(rng);
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    anchor = src.centers[truth.centers.back()];
    const double offset = detail::off_manifold_offset(src);
    for (std::size_t d = 0; d < dir.size(); ++d) anchor[d] += dir[d] / norm * offset;
    const std::size_t tail = std::max<std::size_t>(1, opt.t_len / 4);
    for (std::size_t j = opt.t_len - tail; j < opt.t_len; ++j) truth.off_manifold[j] = true;
  }

  Trace t;
  t.id = (opt.id.empty() ? std::string("t") : opt.id + "-t") + std::to_string(index);
  for (std::size_t j = 0; j < opt.t_len; ++j) {
    StateVector v = truth.off_manifold[j] ? anchor : src.centers[truth.centers[j]];
    for (double& x : v) x += sigma * noise(rng);
    t.states.push_back(std::move(v));
  }

  const std::size_t final_center = truth.centers.back();
  const std::size_t predicted = detail::sample(src.label_dist[final_center], rng);
  truth.error = unit(rng) < src.error_probability(final_center, truth.off_manifold.back());
  std::size_t actual = predicted;
  if (truth.error) {
    const std::size_t L = src.label_count();
    const auto shift = 1 + static_cast<std::size_t>(unit(rng) * static_cast<double>(L - 1));
    actual = (predicted + std::min(shift, L - 1)) % L;
  }
  t.predicted_label = predicted;
  t.true_label = actual;
  return {std::move(t), std::move(truth)};
}

inline Generated generate(const PlantedSource& src, const GenerateOptions& opt) {
  validate(src);
  if (opt.n_traces == 0 || opt.t_len == 0) throw UsageError("n_traces and t_len must be positive");
  if (!(opt.perturbation >= 0.0 && opt.perturbation <= 1.0)) {
    throw UsageError("perturbation must lie in [0, 1]");
  }
  Generated g;
  g.set.id = opt.id;
  g.set.role = opt.role;
  g.set.dimension = src.dimension();
  g.set.label_count = src.label_count();
  g.set.traces.resize(opt.n_traces);
  g.truth.resize(opt.n_traces);
  parallel_for(opt.n_traces, opt.workers, [&](std::size_t i) {
    auto [t, truth] = generate_trace(src, opt, i);
    g.set.traces[i] = std::move(t);
    g.truth[i] = std::move(truth);
  });
  return g;
}

// Test-role suites drawn from streams 1..n_suites (stream 0 is left for
// training data).
inline std::vector<Generated> generate_suite_family(const PlantedSource& src,
                                                    std::size_t n_suites,
                                                    std::size_t suite_size, std::size_t t_len,
                                                    double perturbation,
                                                    std::size_t workers = 1) {
  std::vector<Generated> out(n_suites);
  for (std::size_t s = 0; s < n_suites; ++s) {
    GenerateOptions opt;
    opt.n_traces = suite_size;
    opt.t_len = t_len;
    opt.perturbation = perturbation;
    opt.stream = s + 1;
    opt.role = TraceRole::test;
    opt.id = "suite" + std::to_string(s);
    opt.workers = workers;
    out[s] = generate(src, opt);
  }
  return out;
}

inline nlohmann::json to_json(const PlantedSource& src) {
  return {{"seed", src.seed},
          {"noise_sigma", src.noise_sigma},
          {"centers", src.centers},
          {"initial", src.initial},
          {"transition", src.transition},
          {"label_distribution", src.label_dist},
          {"error_model",
           {{"base_rate", src.errors.base_rate},
            {"impurity_boost", src.errors.impurity_boost},
            {"purity_threshold", src.errors.purity_threshold},
            {"out_of_boundary_boost", src.errors.out_of_boundary_boost}}}};
}

inline PlantedSource source_from_json(const nlohmann::json& j) {
  PlantedSource src;
  try {
    src.seed = j.at("seed").get<std::uint64_t>();
    src.noise_sigma = j.at("noise_sigma").get<double>();
    src.centers = j.at("centers").get<std::vector<StateVector>>();
    src.initial = j.at("initial").get<std::vector<double>>();
    src.transition = j.at("transition").get<std::vector<std::vector<double>>>();
    src.label_dist = j.at("label_distribution").get<std::vector<std::vector<double>>>();
    const auto& e = j.at("error_model");
    src.errors.base_rate = e.at("base_rate").get<double>();
    src.errors.impurity_boost = e.at("impurity_boost").get<double>();
    src.errors.purity_threshold = e.at("purity_threshold").get<double>();
    src.errors.out_of_boundary_boost = e.at("out_of_boundary_boost").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed planted source: ") + e.what());
  }
  validate(src);
  return src;
}

// Ground-truth sidecar written next to a generated bundle.
inline nlohmann::json truth_json(const PlantedSource& src, const Generated& g) {
  nlohmann::json traces = nlohmann::json::array();
  for (std::size_t i = 0; i < g.truth.size(); ++i) {
    traces.push_back({{"id", g.set.traces[i].id},
                      {"centers", g.truth[i].centers},
                      {"off_manifold", g.truth[i].off_manifold},
                      {"error", g.truth[i].error}});
  }
  return {{"source", to_json(src)}, {"traces", traces}};
}

}  // namespace smcov::synth
