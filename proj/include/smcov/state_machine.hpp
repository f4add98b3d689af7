#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "smcov/error.hpp"
#include "smcov/io.hpp"
#include "smcov/kmeans.hpp"
#include "smcov/parallel.hpp"
#include "smcov/projection.hpp"
#include "smcov/trace.hpp"

namespace smcov {

using StateId = std::size_t;
using Transition = std::pair<StateId, StateId>;
using CellKey = std::vector<long long>;

enum class DiscretizerKind { kmeans, grid };

inline const char* to_string(DiscretizerKind k) {
  return k == DiscretizerKind::kmeans ? "kmeans" : "grid";
}

// Centroid geometry. A vector belongs to a centroid's state when it lies
// within that centroid's radius.
struct CentroidGeometry {
  std::vector<StateVector> centroids;
  std::vector<double> radii;
  std::size_t neighbor_count = 8;

  bool operator==(const CentroidGeometry&) const = default;
};

// Uniform hyper-cube grid. Only occupied cells are states.
struct GridGeometry {
  StateVector lower;
  StateVector width;
  std::size_t cells_per_dim = 10;
  std::vector<CellKey> cells;          // state id -> cell
  std::map<CellKey, StateId> index;    // cell -> state id

  CellKey cell_of(std::span<const double> v) const {
    CellKey key(v.size());
    for (std::size_t d = 0; d < v.size(); ++d) {
      const double offset = (v[d] - lower[d]) / width[d];
      auto idx = static_cast<long long>(std::floor(offset));
      // The training maximum sits on the upper boundary of the last cell.
      if (idx == static_cast<long long>(cells_per_dim) &&
          offset <= static_cast<double>(cells_per_dim)) {
        idx = static_cast<long long>(cells_per_dim) - 1;
      }
      key[d] = idx;
    }
    return key;
  }

  StateVector cell_center(const CellKey& key) const {
    StateVector c(key.size());
    for (std::size_t d = 0; d < key.size(); ++d) {
      c[d] = lower[d] + (static_cast<double>(key[d]) + 0.5) * width[d];
    }
    return c;
  }

  bool operator==(const GridGeometry& o) const {
    return lower == o.lower && width == o.width && cells_per_dim == o.cells_per_dim &&
           cells == o.cells;
  }
};

struct Discretizer {
  DiscretizerKind kind = DiscretizerKind::kmeans;
  CentroidGeometry centroid;
  GridGeometry grid;
  std::optional<Projection> projection;

  std::size_t state_count() const {
    return kind == DiscretizerKind::kmeans ? centroid.centroids.size() : grid.cells.size();
  }

  // Dimension of the space the geometry lives in (after projection).
  std::size_t space_dim() const {
    if (kind == DiscretizerKind::kmeans) {
      return centroid.centroids.empty() ? 0 : centroid.centroids.front().size();
    }
    return grid.lower.size();
  }

  std::size_t input_dim() const {
    return projection ? projection->input_dim() : space_dim();
  }

  StateVector to_space(const StateVector& v) const {
    if (v.size() != input_dim()) {
      throw DataError("state dimension mismatch: expected " + std::to_string(input_dim()) +
                      ", got " + std::to_string(v.size()));
    }
    return projection ? project(*projection, v) : v;
  }

  bool operator==(const Discretizer&) const = default;
};

// Neighbour-border radius: half the distance to each of the min(NC, K-1)
// nearest other centroids, maximised, and never smaller than the distance to
// the farthest point assigned to the centroid.
inline std::vector<double> centroid_radii(const std::vector<StateVector>& centroids,
                                          const std::vector<StateVector>& points,
                                          std::size_t neighbor_count) {
  const std::size_t k = centroids.size();
  std::vector<double> radii(k, 0.0);
  for (std::size_t s = 0; s < k; ++s) {
    std::vector<double> dists;
    for (std::size_t o = 0; o < k; ++o) {
      if (o != s) dists.push_back(distance(centroids[s], centroids[o]));
    }
    std::sort(dists.begin(), dists.end());
    const std::size_t nc = std::min(neighbor_count, dists.size());
    for (std::size_t i = 0; i < nc; ++i) radii[s] = std::max(radii[s], 0.5 * dists[i]);
  }
  for (const auto& p : points) {
    double d2 = 0.0;
    const std::size_t s = nearest_index(centroids, p, &d2);
    radii[s] = std::max(radii[s], std::sqrt(d2));
  }
  for (double& r : radii) {
    if (!(r > 0.0)) r = 1e-9;
  }
  return radii;
}

inline Discretizer make_centroid_discretizer(std::vector<StateVector> centroids,
                                             const std::vector<StateVector>& points,
                                             std::size_t neighbor_count = 8) {
  if (centroids.empty()) throw DataError("at least one centroid is required");
  for (const auto& c : centroids) {
    if (c.size() != centroids.front().size()) {
      throw DataError("centroids have inconsistent dimensions");
    }
    for (double v : c) {
      if (!std::isfinite(v)) throw DataError("non-finite centroid");
    }
  }
  Discretizer disc;
  disc.kind = DiscretizerKind::kmeans;
  disc.centroid.neighbor_count = neighbor_count;
  disc.centroid.radii = centroid_radii(centroids, points, neighbor_count);
  disc.centroid.centroids = std::move(centroids);
  return disc;
}

struct KMeansFitOptions {
  std::size_t neighbor_count = 8;
  KMeansOptions lloyd;
};

inline Discretizer fit_kmeans(const std::vector<StateVector>& points, std::size_t k,
                              std::uint64_t seed, const KMeansFitOptions& options = {}) {
  auto result = kmeans(points, k, seed, options.lloyd);
  return make_centroid_discretizer(std::move(result.centroids), points,
                                   options.neighbor_count);
}

// Grid over the training bounding box; the occupied cells become states in
// lexicographic cell order.
inline Discretizer fit_grid(const std::vector<StateVector>& points,
                            std::size_t cells_per_dim = 10) {
  if (points.empty()) throw DataError("grid needs at least one point");
  if (cells_per_dim < 1) throw UsageError("grid needs at least one cell per dimension");
  const std::size_t dim = points.front().size();
  Discretizer disc;
  disc.kind = DiscretizerKind::grid;
  auto& g = disc.grid;
  g.cells_per_dim = cells_per_dim;
  g.lower.assign(dim, std::numeric_limits<double>::infinity());
  StateVector upper(dim, -std::numeric_limits<double>::infinity());
  for (const auto& p : points) {
    for (std::size_t d = 0; d < dim; ++d) {
      g.lower[d] = std::min(g.lower[d], p[d]);
      upper[d] = std::max(upper[d], p[d]);
    }
  }
  g.width.resize(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    const double range = upper[d] - g.lower[d];
    g.width[d] = range > 0.0 ? range / static_cast<double>(cells_per_dim) : 1.0;
  }
  std::set<CellKey> occupied;
  for (const auto& p : points) occupied.insert(g.cell_of(p));
  for (const auto& key : occupied) {
    g.index.emplace(key, g.cells.size());
    g.cells.push_back(key);
  }
  return disc;
}

// A state created at mapping time for a vector outside every known state.
struct DynamicState {
  StateVector center;  // in discretizer space
  double radius = 0.0;
  CellKey cell;        // grid only

  bool operator==(const DynamicState&) const = default;
};

struct StateMachine {
  Discretizer disc;
  std::size_t label_count = 2;
  std::vector<std::string> labels;
  std::vector<std::vector<std::uint64_t>> hist;  // [state][label] training finals
  std::vector<std::uint64_t> visits;             // training vectors per state
  std::map<Transition, std::uint64_t> trans;     // training transitions
  std::vector<std::uint64_t> outgoing;
  std::vector<DynamicState> dynamic;             // registry, ids follow SMS
  nlohmann::json metadata = nlohmann::json::object();

  std::size_t training_state_count() const { return disc.state_count(); }
  std::size_t state_count() const { return training_state_count() + dynamic.size(); }
  bool is_dynamic(StateId s) const { return s >= training_state_count(); }

  std::uint64_t finals_in(StateId s) const {
    if (is_dynamic(s)) return 0;
    std::uint64_t n = 0;
    for (auto c : hist[s]) n += c;
    return n;
  }

  std::uint64_t weight(std::size_t label, StateId s) const {
    return is_dynamic(s) || label >= label_count ? 0 : hist[s][label];
  }

  // SMFS: training states holding at least one training final state.
  std::set<StateId> final_states() const {
    std::set<StateId> out;
    for (StateId s = 0; s < training_state_count(); ++s) {
      if (finals_in(s) > 0) out.insert(s);
    }
    return out;
  }

  std::uint64_t total_finals() const {
    std::uint64_t n = 0;
    for (StateId s = 0; s < training_state_count(); ++s) n += finals_in(s);
    return n;
  }

  void reset_dynamic() { dynamic.clear(); }
};

struct AbstractTrace {
  std::string trace_id;
  std::vector<StateId> state_ids;
  std::vector<bool> is_new;
  StateId final_state_id = 0;
  Label predicted_label;
  Label true_label;

  bool operator==(const AbstractTrace&) const = default;
};

inline double transition_prob(const StateMachine& sm, StateId from, StateId to) {
  if (from >= sm.outgoing.size() || sm.outgoing[from] == 0) return 0.0;
  const auto it = sm.trans.find({from, to});
  if (it == sm.trans.end()) return 0.0;
  return static_cast<double>(it->second) / static_cast<double>(sm.outgoing[from]);
}

namespace detail {

// Training-time state of a vector already in discretizer space.
inline std::optional<StateId> training_state(const Discretizer& disc,
                                             std::span<const double> v) {
  if (disc.kind == DiscretizerKind::kmeans) {
    return nearest_index(disc.centroid.centroids, v);
  }
  const auto it = disc.grid.index.find(disc.grid.cell_of(v));
  if (it == disc.grid.index.end()) return std::nullopt;
  return it->second;
}

class StateLookup {
 public:
  StateLookup(const StateMachine& sm, std::vector<DynamicState>& extra)
      : sm_(sm), extra_(extra) {}

  std::pair<StateId, bool> resolve(std::span<const double> v) {
    return sm_.disc.kind == DiscretizerKind::kmeans ? resolve_centroid(v)
                                                    : resolve_grid(v);
  }

 private:
  const DynamicState& dynamic(std::size_t i) const {
    return i < sm_.dynamic.size() ? sm_.dynamic[i] : extra_[i - sm_.dynamic.size()];
  }
  std::size_t dynamic_count() const { return sm_.dynamic.size() + extra_.size(); }

  std::pair<StateId, bool> resolve_centroid(std::span<const double> v) {
    const auto& geo = sm_.disc.centroid;
    const std::size_t k = geo.centroids.size();
    StateId best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    StateId nearest_training = 0;
    double nearest_training_d = std::numeric_limits<double>::infinity();
    for (StateId s = 0; s < k; ++s) {
      const double d = distance(geo.centroids[s], v);
      if (d < nearest_training_d) {
        nearest_training_d = d;
        nearest_training = s;
      }
      if (d <= geo.radii[s] && d < best_d) {
        best_d = d;
        best = s;
      }
    }
    for (std::size_t i = 0; i < dynamic_count(); ++i) {
      const auto& ds = dynamic(i);
      const double d = distance(ds.center, v);
      if (d <= ds.radius && d < best_d) {
        best_d = d;
        best = k + i;
      }
    }
    if (best_d < std::numeric_limits<double>::infinity()) {
      return {best, best >= k};
    }
    extra_.push_back({StateVector(v.begin(), v.end()), geo.radii[nearest_training], {}});
    return {k + dynamic_count() - 1, true};
  }

  std::pair<StateId, bool> resolve_grid(std::span<const double> v) {
    const auto& g = sm_.disc.grid;
    CellKey key = g.cell_of(v);
    if (auto it = g.index.find(key); it != g.index.end()) return {it->second, false};
    const std::size_t k = g.cells.size();
    for (std::size_t i = 0; i < dynamic_count(); ++i) {
      if (dynamic(i).cell == key) return {k + i, true};
    }
    extra_.push_back({g.cell_center(key), 0.0, std::move(key)});
    return {k + dynamic_count() - 1, true};
  }

  const StateMachine& sm_;
  std::vector<DynamicState>& extra_;
};

inline AbstractTrace map_with(const StateMachine& sm, const Trace& t,
                              std::vector<DynamicState>& extra) {
  if (t.states.empty()) throw DataError("trace '" + t.id + "' has no timesteps");
  StateLookup lookup(sm, extra);
  AbstractTrace at;
  at.trace_id = t.id;
  at.predicted_label = t.predicted_label;
  at.true_label = t.true_label;
  at.state_ids.reserve(t.length());
  at.is_new.reserve(t.length());
  for (const auto& v : t.states) {
    const auto [id, is_new] = lookup.resolve(sm.disc.to_space(v));
    at.state_ids.push_back(id);
    at.is_new.push_back(is_new);
  }
  at.final_state_id = at.state_ids.back();
  return at;
}

}  // namespace detail

// Maps a trace onto the state machine. Vectors outside every state's radius
// (or outside every occupied grid cell) get a new dynamic state. With
// mutate=false those states are visible within this trace only.
inline AbstractTrace map_trace(StateMachine& sm, const Trace& t, bool mutate) {
  std::vector<DynamicState> extra;
  auto at = detail::map_with(sm, t, extra);
  if (mutate) {
    for (auto& d : extra) sm.dynamic.push_back(std::move(d));
  }
  return at;
}

inline AbstractTrace map_trace(const StateMachine& sm, const Trace& t) {
  std::vector<DynamicState> extra;
  return detail::map_with(sm, t, extra);
}

// Maps every trace without persisting dynamic states; parallel over traces.
inline std::vector<AbstractTrace> map_traces(const StateMachine& sm, const TraceSet& set,
                                             std::size_t workers = 1) {
  std::vector<AbstractTrace> out(set.size());
  parallel_for(set.size(), workers, [&](std::size_t i) {
    out[i] = map_trace(sm, set.traces[i]);
  });
  return out;
}

// Maps a suite in file order with a shared dynamic registry; the registry is
// discarded afterwards so `sm` is unchanged.
inline std::vector<AbstractTrace> map_suite(const StateMachine& sm, const TraceSet& suite) {
  std::vector<DynamicState> registry;
  std::vector<AbstractTrace> out;
  out.reserve(suite.size());
  for (const auto& t : suite.traces) out.push_back(detail::map_with(sm, t, registry));
  return out;
}

inline StateMachine build_sm(const Discretizer& disc, const TraceSet& training,
                             std::size_t workers = 1) {
  if (training.role != TraceRole::training) {
    throw DataError("build_sm needs a training-role trace set");
  }
  if (!training.empty() && training.dimension != disc.input_dim()) {
    throw DataError("training dimension " + std::to_string(training.dimension) +
                    " does not match discretizer input dimension " +
                    std::to_string(disc.input_dim()));
  }
  StateMachine sm;
  sm.disc = disc;
  sm.label_count = training.label_count;
  sm.labels = training.labels;
  const std::size_t k = disc.state_count();
  sm.hist.assign(k, std::vector<std::uint64_t>(training.label_count, 0));
  sm.visits.assign(k, 0);
  sm.outgoing.assign(k, 0);

  std::vector<std::vector<StateId>> ids(training.size());
  parallel_for(training.size(), workers, [&](std::size_t i) {
    const auto& t = training.traces[i];
    ids[i].reserve(t.length());
    for (const auto& v : t.states) {
      const auto s = detail::training_state(disc, disc.to_space(v));
      if (!s) {
        throw DataError("training vector of trace '" + t.id + "' falls outside the grid");
      }
      ids[i].push_back(*s);
    }
  });

  for (std::size_t i = 0; i < training.size(); ++i) {
    const auto& t = training.traces[i];
    if (!t.predicted_label) {
      throw DataError("training trace '" + t.id + "' has a null predicted label");
    }
    const auto& path = ids[i];
    for (std::size_t j = 0; j < path.size(); ++j) {
      ++sm.visits[path[j]];
      if (j + 1 < path.size()) {
        ++sm.trans[{path[j], path[j + 1]}];
        ++sm.outgoing[path[j]];
      }
    }
    ++sm.hist[path.back()][*t.predicted_label];
  }
  return sm;
}

// ---- extraction pipeline ----

enum class ExtractMethod { kmeans, grid };

struct ExtractOptions {
  ExtractMethod method = ExtractMethod::kmeans;
  std::size_t k = 25;
  std::size_t grid_cells = 10;
  std::size_t neighbor_count = 8;
  std::optional<ProjectionKind> projection;
  std::size_t projection_dim = 3;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

inline std::vector<StateVector> all_states(const TraceSet& set) {
  std::vector<StateVector> out;
  for (const auto& t : set.traces) out.insert(out.end(), t.states.begin(), t.states.end());
  return out;
}

// Fits the optional projection (PCA on every state, LDA on final states with
// their predicted labels), discretises the projected states, and counts.
inline StateMachine extract(const TraceSet& training, const ExtractOptions& opt) {
  if (training.empty()) throw DataError("training set is empty");
  std::optional<Projection> projection;
  std::vector<StateVector> points = all_states(training);
  if (opt.projection == ProjectionKind::pca) {
    projection = fit_pca(points, opt.projection_dim);
  } else if (opt.projection == ProjectionKind::lda) {
    std::vector<StateVector> finals;
    std::vector<std::size_t> labels;
    for (const auto& t : training.traces) {
      if (!t.predicted_label) {
        throw DataError("training trace '" + t.id + "' has a null predicted label");
      }
      finals.push_back(t.final_state());
      labels.push_back(*t.predicted_label);
    }
    projection = fit_lda(finals, labels, opt.projection_dim);
  }
  if (projection) {
    for (auto& p : points) p = project(*projection, p);
  }

  Discretizer disc;
  if (opt.method == ExtractMethod::kmeans) {
    KMeansFitOptions fit;
    fit.neighbor_count = opt.neighbor_count;
    fit.lloyd.workers = opt.workers;
    disc = fit_kmeans(points, opt.k, opt.seed, fit);
  } else {
    disc = fit_grid(points, opt.grid_cells);
  }
  disc.projection = projection;
  StateMachine sm = build_sm(disc, training, opt.workers);
  sm.metadata = {{"method", opt.method == ExtractMethod::kmeans ? "kmeans" : "grid"},
                 {"seed", opt.seed},
                 {"k", opt.k},
                 {"grid_cells", opt.grid_cells},
                 {"neighbor_count", opt.neighbor_count},
                 {"projection", projection ? to_string(projection->kind) : "none"},
                 {"projection_dim", projection ? projection->output_dim() : 0}};
  return sm;
}

// ---- serialisation ----

inline nlohmann::json to_json(const StateMachine& sm) {
  nlohmann::json disc;
  disc["kind"] = to_string(sm.disc.kind);
  if (sm.disc.kind == DiscretizerKind::kmeans) {
    disc["centroids"] = sm.disc.centroid.centroids;
    disc["radii"] = sm.disc.centroid.radii;
    disc["neighbor_count"] = sm.disc.centroid.neighbor_count;
  } else {
    disc["lower"] = sm.disc.grid.lower;
    disc["width"] = sm.disc.grid.width;
    disc["cells_per_dim"] = sm.disc.grid.cells_per_dim;
    disc["cells"] = sm.disc.grid.cells;
  }
  nlohmann::json hist = nlohmann::json::array();
  for (StateId s = 0; s < sm.hist.size(); ++s) {
    for (std::size_t l = 0; l < sm.hist[s].size(); ++l) {
      if (sm.hist[s][l] > 0) hist.push_back({s, l, sm.hist[s][l]});
    }
  }
  nlohmann::json trans = nlohmann::json::array();
  for (const auto& [edge, count] : sm.trans) trans.push_back({edge.first, edge.second, count});
  nlohmann::json j = {{"version", 1},
                      {"discretizer", disc},
                      {"label_count", sm.label_count},
                      {"labels", sm.labels},
                      {"state_count", sm.training_state_count()},
                      {"histograms", hist},
                      {"visits", sm.visits},
                      {"transitions", trans},
                      {"metadata", sm.metadata}};
  j["projection"] = sm.disc.projection ? to_json(*sm.disc.projection) : nlohmann::json();
  return j;
}

inline StateMachine state_machine_from_json(const nlohmann::json& j) {
  StateMachine sm;
  try {
    if (j.at("version").get<int>() != 1) throw DataError("unsupported state machine version");
    const auto& disc = j.at("discretizer");
    const auto kind = disc.at("kind").get<std::string>();
    if (kind == "kmeans") {
      sm.disc.kind = DiscretizerKind::kmeans;
      sm.disc.centroid.centroids = disc.at("centroids").get<std::vector<StateVector>>();
      sm.disc.centroid.radii = disc.at("radii").get<std::vector<double>>();
      sm.disc.centroid.neighbor_count = disc.at("neighbor_count").get<std::size_t>();
      if (sm.disc.centroid.radii.size() != sm.disc.centroid.centroids.size()) {
        throw DataError("radii and centroids differ in length");
      }
    } else if (kind == "grid") {
      sm.disc.kind = DiscretizerKind::grid;
      auto& g = sm.disc.grid;
      g.lower = disc.at("lower").get<StateVector>();
      g.width = disc.at("width").get<StateVector>();
      g.cells_per_dim = disc.at("cells_per_dim").get<std::size_t>();
      g.cells = disc.at("cells").get<std::vector<CellKey>>();
      for (StateId s = 0; s < g.cells.size(); ++s) g.index.emplace(g.cells[s], s);
    } else {
      throw DataError("unknown discretizer kind '" + kind + "'");
    }
    if (j.contains("projection") && !j["projection"].is_null()) {
      sm.disc.projection = projection_from_json(j["projection"]);
    }
    sm.label_count = j.at("label_count").get<std::size_t>();
    sm.labels = j.at("labels").get<std::vector<std::string>>();
    const std::size_t k = sm.disc.state_count();
    if (j.at("state_count").get<std::size_t>() != k) {
      throw DataError("state_count does not match the discretizer");
    }
    sm.hist.assign(k, std::vector<std::uint64_t>(sm.label_count, 0));
    for (const auto& e : j.at("histograms")) {
      const auto s = e.at(0).get<std::size_t>();
      const auto l = e.at(1).get<std::size_t>();
      if (s >= k || l >= sm.label_count) throw DataError("histogram entry out of range");
      sm.hist[s][l] = e.at(2).get<std::uint64_t>();
    }
    sm.visits = j.at("visits").get<std::vector<std::uint64_t>>();
    if (sm.visits.size() != k) throw DataError("visits length does not match state count");
    sm.outgoing.assign(k, 0);
    for (const auto& e : j.at("transitions")) {
      const auto a = e.at(0).get<std::size_t>();
      const auto b = e.at(1).get<std::size_t>();
      if (a >= k || b >= k) throw DataError("transition out of range");
      const auto c = e.at(2).get<std::uint64_t>();
      sm.trans[{a, b}] = c;
      sm.outgoing[a] += c;
    }
    sm.metadata = j.value("metadata", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed state machine: ") + e.what());
  }
  return sm;
}

inline void save_state_machine(const StateMachine& sm, const std::filesystem::path& path) {
  io::write_file_atomic(path, to_json(sm).dump() + "\n");
}

inline StateMachine load_state_machine(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("malformed state machine file: " + std::string(e.what()));
  }
  return state_machine_from_json(j);
}

}  // namespace smcov
