#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "smcov/coverage.hpp"
#include "smcov/decision_tree.hpp"
#include "smcov/error.hpp"
#include "smcov/features.hpp"
#include "smcov/io.hpp"
#include "smcov/metrics.hpp"
#include "smcov/parallel.hpp"
#include "smcov/rnn.hpp"
#include "smcov/significance.hpp"
#include "smcov/state_machine.hpp"
#include "smcov/stats.hpp"
#include "smcov/synth.hpp"
#include "smcov/trace.hpp"

namespace smcov::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum class Format { json, table, csv };

inline Format parse_format(const std::string& s) {
  if (s == "json") return Format::json;
  if (s == "table") return Format::table;
  if (s == "csv") return Format::csv;
  throw UsageError("unknown format '" + s + "'");
}

struct Global {
  std::size_t workers = 1;
  std::string format = "table";
  bool force = false;
};

// Rows of strings rendered as an aligned table or as CSV.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void print(std::ostream& out, Format f) const {
    if (f == Format::csv) {
      auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
        out << '\n';
      };
      line(header);
      for (const auto& r : rows) line(r);
      return;
    }
    std::vector<std::size_t> width(header.size(), 0);
    auto measure = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], display_width(r[i]));
    };
    measure(header);
    for (const auto& r : rows) measure(r);
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        out << (i ? "  " : "") << r[i];
        if (i + 1 < r.size()) out << std::string(width[i] - display_width(r[i]), ' ');
      }
      out << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
  }

  // Counts UTF-8 code points, enough for the check marks used here.
  static std::size_t display_width(const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80 ? 1 : 0;
    return n;
  }
};

inline std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

inline void print_json(std::ostream& out, const json& j) { out << j.dump(2) << '\n'; }

// Refuses to clobber an input or an existing artifact (unless forced).
inline void check_output(const fs::path& out, const std::vector<fs::path>& inputs, bool force) {
  if (out.empty()) throw UsageError("an output path is required");
  for (const auto& in : inputs) {
    if (in.empty()) continue;
    std::error_code ec;
    if (fs::exists(in) && fs::exists(out) && fs::equivalent(in, out, ec)) {
      throw UsageError("output path '" + out.string() + "' collides with input '" + in.string() + "'");
    }
    if (fs::weakly_canonical(in) == fs::weakly_canonical(out)) {
      throw UsageError("output path '" + out.string() + "' collides with input '" + in.string() + "'");
    }
  }
  if (!force && fs::exists(out)) {
    throw UsageError("output '" + out.string() + "' already exists (use --force to replace it)");
  }
}

inline TraceSet load_bundle(const fs::path& dir) {
  TraceSet set = load_trace_bundle(dir);
  if (set.id.empty()) set.id = dir.filename().string();
  return set;
}

inline std::string name_of(const fs::path& p) { return p.stem().string(); }

// ---- extract ----

struct ExtractArgs {
  std::string traces;
  std::string method = "kmeans";
  std::size_t k = 25;
  std::size_t grid_cells = 10;
  std::size_t neighbors = 8;
  std::string projection = "none";
  std::size_t projection_dim = 3;
  std::string centroids;
  std::optional<std::uint64_t> seed;
  std::string out;
};

inline StateMachine run_extract_sm(const ExtractArgs& a, const TraceSet& training,
                                   std::size_t workers) {
  if (a.method == "fixed") {
    if (a.centroids.empty()) throw UsageError("--method fixed needs --centroids");
    if (a.projection != "none") throw UsageError("--method fixed does not take a projection");
    std::vector<StateVector> centroids;
    try {
      centroids = json::parse(io::read_file(a.centroids)).get<std::vector<StateVector>>();
    } catch (const json::exception& e) {
      throw DataError("malformed centroids file: " + std::string(e.what()));
    }
    if (!centroids.empty() && centroids.front().size() != training.dimension) {
      throw DataError("centroid dimension does not match the traces");
    }
    auto sm = build_sm(make_centroid_discretizer(std::move(centroids), all_states(training),
                                                 a.neighbors),
                       training, workers);
    sm.metadata = {{"method", "fixed"}, {"neighbor_count", a.neighbors}};
    return sm;
  }
  ExtractOptions opt;
  if (a.method == "kmeans") {
    if (!a.seed) throw UsageError("--method kmeans needs an explicit --seed");
    opt.method = ExtractMethod::kmeans;
  } else if (a.method == "grid") {
    opt.method = ExtractMethod::grid;
  } else {
    throw UsageError("unknown method '" + a.method + "' (kmeans, grid, fixed)");
  }
  opt.k = a.k;
  opt.grid_cells = a.grid_cells;
  opt.neighbor_count = a.neighbors;
  if (a.projection != "none") opt.projection = parse_projection_kind(a.projection);
  opt.projection_dim = a.projection_dim;
  opt.seed = a.seed.value_or(0);
  opt.workers = workers;
  return extract(training, opt);
}

inline json score_json_or_null(const StateMachine& sm, int exponent = 10) {
  if (sm.total_finals() == 0) return nullptr;
  return to_json(score(sm, exponent));
}

inline int cmd_extract(const ExtractArgs& a, const Global& g, std::ostream& out) {
  check_output(a.out, {a.traces}, g.force);
  const TraceSet training = load_bundle(a.traces);
  StateMachine sm = run_extract_sm(a, training, g.workers);
  sm.metadata["source"] = fs::path(a.traces).filename().string();
  save_state_machine(sm, a.out);

  const json summary = {{"output", a.out},
                        {"states", sm.training_state_count()},
                        {"transitions", sm.trans.size()},
                        {"metadata", sm.metadata},
                        {"score", score_json_or_null(sm)}};
  const Format f = parse_format(g.format);
  if (f == Format::json) {
    print_json(out, summary);
  } else {
    Table t{{"output", "states", "transitions", "method", "seed"}, {}};
    t.rows.push_back({a.out, std::to_string(sm.training_state_count()),
                      std::to_string(sm.trans.size()), sm.metadata.value("method", ""),
                      a.seed ? std::to_string(*a.seed) : "-"});
    t.print(out, f);
  }
  return 0;
}

// ---- score ----

struct ScoreArgs {
  std::vector<std::string> sms;
  int exponent = 10;
};

inline int cmd_score(const ScoreArgs& a, const Global& g, std::ostream& out) {
  json all = json::array();
  Table t{{"sm", "purity", "richness", "goodness", "scale", "final_states", "states", "note"}, {}};
  for (const auto& path : a.sms) {
    const auto sm = load_state_machine(path);
    const auto s = score(sm, a.exponent);
    json j = to_json(s);
    j["sm"] = path;
    all.push_back(j);
    t.rows.push_back({name_of(path), fmt(s.purity, 10), fmt(s.richness, 10), fmt(s.goodness, 10),
                      fmt(s.scale, 10), std::to_string(s.states_with_finals),
                      std::to_string(s.state_count),
                      s.lacks_discrimination() ? "scale<1" : ""});
  }
  const Format f = parse_format(g.format);
  if (f == Format::json) {
    print_json(out, all);
  } else {
    t.print(out, f);
  }
  return 0;
}

// ---- coverage ----

struct CoverageArgs {
  std::string sm;
  std::vector<std::string> suites;
  std::vector<std::string> criteria;
};

inline std::vector<Criterion> parse_criteria(const std::vector<std::string>& names) {
  if (names.empty() || (names.size() == 1 && names[0] == "all")) {
    return {kAllCriteria.begin(), kAllCriteria.end()};
  }
  std::vector<Criterion> out;
  for (const auto& n : names) out.push_back(parse_criterion(n));
  return out;
}

inline int cmd_coverage(const CoverageArgs& a, const Global& g, std::ostream& out) {
  const auto sm = load_state_machine(a.sm);
  const auto criteria = parse_criteria(a.criteria);
  std::vector<TraceSet> suites;
  for (const auto& s : a.suites) suites.push_back(load_bundle(s));
  std::vector<CoverageReport> reports(suites.size());
  parallel_for(suites.size(), g.workers, [&](std::size_t i) {
    reports[i] = evaluate_all(sm, suites[i]);
  });

  const Format f = parse_format(g.format);
  if (f == Format::json) {
    json all = json::array();
    for (auto& r : reports) {
      json j = to_json(r);
      json kept = json::object();
      for (auto c : criteria) kept[to_string(c)] = j["criteria"][to_string(c)];
      j["criteria"] = kept;
      all.push_back(j);
    }
    print_json(out, all);
    return 0;
  }
  Table t{{"suite", "criterion", "value", "numerator", "denominator", "defined"}, {}};
  for (const auto& r : reports) {
    for (auto c : criteria) {
      const auto& v = r.values.at(c);
      t.rows.push_back({r.suite_id, to_string(c), fmt(v.value, 10), fmt(v.numerator, 10),
                        fmt(v.denominator, 10), v.defined ? "yes" : "no"});
    }
  }
  t.print(out, f);
  return 0;
}

// ---- ks-test ----

struct KsArgs {
  std::vector<std::string> sms;
  std::string suites_dir;
  std::vector<std::string> criteria;
  double alpha = 0.05;
  bool correction = false;
  std::string out;
};

inline std::vector<TraceSet> load_suites_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<TraceSet> suites;
  for (const auto& p : paths) suites.push_back(load_bundle(p));
  if (suites.size() < 2) throw DataError("need at least 2 suite bundles in '" + dir.string() + "'");
  return suites;
}

inline int cmd_ks(const KsArgs& a, const Global& g, std::ostream& out) {
  if (!a.out.empty()) check_output(a.out, {a.suites_dir}, g.force);
  const auto criteria = parse_criteria(a.criteria);
  const auto suites = load_suites_dir(a.suites_dir);
  stats::KsOptions opt;
  opt.small_sample_correction = a.correction;

  std::vector<std::vector<SignificanceResult>> results;
  for (const auto& path : a.sms) {
    results.push_back(
        significance_matrix(load_state_machine(path), suites, criteria, opt, g.workers));
  }

  Table matrix{{"criterion"}, {}};
  for (const auto& p : a.sms) matrix.header.push_back(name_of(p));
  for (std::size_t c = 0; c < criteria.size(); ++c) {
    std::vector<std::string> row{to_string(criteria[c])};
    for (const auto& r : results) row.push_back(r[c].significant(a.alpha) ? "✓" : "✗");
    matrix.rows.push_back(std::move(row));
  }
  if (!a.out.empty()) {
    std::ostringstream csv;
    matrix.print(csv, Format::csv);
    io::write_file_atomic(a.out, csv.str());
  }

  const Format f = parse_format(g.format);
  if (f == Format::json) {
    json all = json::array();
    for (std::size_t m = 0; m < a.sms.size(); ++m) {
      json rows = json::array();
      for (const auto& r : results[m]) rows.push_back(to_json(r, a.alpha));
      all.push_back({{"sm", a.sms[m]}, {"suites", suites.size()}, {"alpha", a.alpha},
                     {"results", rows}});
    }
    print_json(out, all);
  } else if (f == Format::csv) {
    matrix.print(out, f);
  } else {
    Table t{{"sm", "criterion", "D", "p", "subsets", "significant"}, {}};
    for (std::size_t m = 0; m < a.sms.size(); ++m) {
      for (const auto& r : results[m]) {
        t.rows.push_back({name_of(a.sms[m]), to_string(r.criterion),
                          r.ks ? fmt(r.ks->d_statistic) : "-", r.ks ? fmt(r.ks->p_value) : "-",
                          std::to_string(r.non_empty_subsets),
                          r.ks ? (r.significant(a.alpha) ? "✓" : "✗") : "✗ (insufficient)"});
      }
    }
    t.print(out, f);
  }
  return 0;
}

// ---- train-predictor ----

struct TrainArgs {
  std::string sm;
  std::string train_suite;
  std::string eval_suite;
  std::size_t max_depth = 8;
  std::size_t min_leaf = 5;
  double prune_alpha = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

inline std::optional<double> auc_or_null(const DecisionTree& tree,
                                         const std::vector<FeatureRow>& rows) {
  std::vector<double> scores;
  std::vector<bool> labels;
  for (const auto& r : rows) {
    scores.push_back(predict_error(tree, r));
    labels.push_back(r.error);
  }
  const auto pos = std::count(labels.begin(), labels.end(), true);
  if (pos == 0 || static_cast<std::size_t>(pos) == labels.size()) return std::nullopt;
  return stats::roc_auc(scores, labels).auc;
}

inline std::vector<FeatureRow> labeled_features(const StateMachine& sm, const TraceSet& set,
                                                std::size_t workers) {
  for (const auto& t : set.traces) {
    if (!t.predicted_label || !t.true_label) {
      throw DataError("trace '" + t.id + "' needs both labels to train or evaluate the predictor");
    }
  }
  return extract_features(sm, set, workers);
}

inline int cmd_train(const TrainArgs& a, const Global& g, std::ostream& out) {
  check_output(a.out, {a.sm, a.train_suite, a.eval_suite}, g.force);
  if (!a.eval_suite.empty() &&
      fs::weakly_canonical(a.train_suite) == fs::weakly_canonical(a.eval_suite)) {
    throw UsageError("--train-suite and --eval-suite must be different bundles");
  }
  const auto sm = load_state_machine(a.sm);
  const auto train_rows = labeled_features(sm, load_bundle(a.train_suite), g.workers);
  TreeParams params{a.max_depth, a.min_leaf, a.seed};
  DecisionTree tree = train_tree(train_rows, params);
  if (a.prune_alpha > 0.0) tree = prune(tree, a.prune_alpha);

  json report = {{"train_rows", train_rows.size()},
                 {"train_auc", nullptr},
                 {"eval_auc", nullptr},
                 {"leaves", tree.leaf_count()},
                 {"depth", tree.depth()}};
  if (auto v = auc_or_null(tree, train_rows)) report["train_auc"] = *v;
  if (!a.eval_suite.empty()) {
    const auto eval_rows = labeled_features(sm, load_bundle(a.eval_suite), g.workers);
    report["eval_rows"] = eval_rows.size();
    if (auto v = auc_or_null(tree, eval_rows)) report["eval_auc"] = *v;
  }
  json artifact = to_json(tree);
  artifact["metadata"] = {{"sm", a.sm},
                          {"train_suite", a.train_suite},
                          {"eval_suite", a.eval_suite},
                          {"prune_alpha", a.prune_alpha},
                          {"seed", a.seed},
                          {"report", report}};
  io::write_file_atomic(a.out, artifact.dump(2) + "\n");

  const Format f = parse_format(g.format);
  if (f == Format::json) {
    report["importances"] = artifact["importances"];
    print_json(out, report);
    return 0;
  }
  Table t{{"feature", "importance"}, {}};
  for (std::size_t i = 0; i < tree.importances.size(); ++i) {
    t.rows.push_back({kFeatureNames[i], fmt(tree.importances[i])});
  }
  std::sort(t.rows.begin(), t.rows.end(),
            [](const auto& x, const auto& y) { return std::stod(x[1]) > std::stod(y[1]); });
  if (f == Format::table) {
    out << "leaves " << tree.leaf_count() << ", depth " << tree.depth();
    if (!report["train_auc"].is_null()) out << ", train AUC " << fmt(report["train_auc"].get<double>());
    if (!report["eval_auc"].is_null()) out << ", eval AUC " << fmt(report["eval_auc"].get<double>());
    out << '\n';
  }
  t.print(out, f);
  return 0;
}

// ---- predict ----

struct PredictArgs {
  std::string sm;
  std::string tree;
  std::string traces;  // empty: read JSONL records from standard input
};

inline json prediction_json(const StateMachine& sm, const DecisionTree& tree, const Trace& t) {
  const auto row = extract_features(sm, map_trace(sm, t));
  const auto v = row.values();
  json rules = json::array();
  for (const auto& r : explain_prediction(tree, std::span<const double>(v))) {
    rules.push_back(r.describe());
  }
  json features = json::object();
  for (std::size_t i = 0; i < kFeatureCount; ++i) features[kFeatureNames[i]] = v[i];
  return {{"id", t.id},
          {"probability", predict_error(tree, row)},
          {"rules", rules},
          {"features", features}};
}

inline DecisionTree load_tree(const fs::path& path) {
  try {
    return tree_from_json(json::parse(io::read_file(path)));
  } catch (const json::parse_error& e) {
    throw DataError("malformed tree file: " + std::string(e.what()));
  }
}

inline int cmd_predict(const PredictArgs& a, const Global& g, std::ostream& out,
                       std::istream& in) {
  const auto sm = load_state_machine(a.sm);
  const auto tree = load_tree(a.tree);
  const Format f = parse_format(g.format);
  if (!a.traces.empty()) {
    const auto set = load_bundle(a.traces);
    if (set.dimension != sm.disc.input_dim()) {
      throw DataError("trace dimension does not match the state machine");
    }
    std::vector<json> preds(set.size());
    parallel_for(set.size(), g.workers, [&](std::size_t i) {
      preds[i] = prediction_json(sm, tree, set.traces[i]);
    });
    if (f == Format::table || f == Format::csv) {
      Table t{{"id", "probability", "rules"}, {}};
      for (const auto& p : preds) {
        std::string rules;
        for (const auto& r : p["rules"]) rules += (rules.empty() ? "" : "; ") + r.get<std::string>();
        t.rows.push_back({p["id"].get<std::string>(), fmt(p["probability"].get<double>()), rules});
      }
      t.print(out, f);
    } else {
      for (const auto& p : preds) out << p.dump() << '\n';
    }
    return 0;
  }
  // Online mode: one trace record per line in, one prediction per line out.
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Trace t = parse_trace_record(line, n);
    try {
      validate_trace(t, sm.disc.input_dim(), sm.label_count);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(n) + ": " + e.what());
    }
    out << prediction_json(sm, tree, t).dump() << std::endl;
  }
  return 0;
}

// ---- synth ----

struct SynthArgs {
  std::string out;
  std::size_t centers = 8;
  std::size_t dim = 2;
  std::size_t labels = 2;
  std::size_t mixed = 0;
  double sigma = 0.1;
  double separation = 8.0;
  double base_rate = 0.05;
  double impurity_boost = 1.0;
  double purity_threshold = 0.75;
  double oob_boost = 1.0;
  std::optional<std::uint64_t> seed;
  std::size_t traces = 1000;
  std::size_t t_len = 8;
  double perturbation = 0.0;
  std::string role = "training";
  std::uint64_t stream = 0;
  std::size_t suites = 0;
  std::size_t suite_size = 200;
};

inline void write_generated(const synth::PlantedSource& src, const synth::Generated& g,
                            const fs::path& dir) {
  save_trace_bundle(g.set, dir);
  io::write_file_atomic(dir / "truth.json", synth::truth_json(src, g).dump() + "\n");
}

inline int cmd_synth(const SynthArgs& a, const Global& g, std::ostream& out) {
  if (!a.seed) throw UsageError("synth needs an explicit --seed");
  check_output(a.out, {}, g.force);
  synth::SourceOptions so;
  so.centers = a.centers;
  so.dimension = a.dim;
  so.label_count = a.labels;
  so.mixed_centers = a.mixed;
  so.noise_sigma = a.sigma;
  so.separation = a.separation;
  so.errors = {a.base_rate, a.impurity_boost, a.purity_threshold, a.oob_boost};
  so.seed = *a.seed;
  const auto src = synth::make_source(so);

  json summary = {{"output", a.out}, {"seed", *a.seed}, {"centers", a.centers}};
  if (a.suites > 0) {
    const auto family = synth::generate_suite_family(src, a.suites, a.suite_size, a.t_len,
                                                     a.perturbation, g.workers);
    const int digits = static_cast<int>(std::to_string(a.suites - 1).size());
    for (std::size_t s = 0; s < family.size(); ++s) {
      std::ostringstream name;
      name << "suite_" << std::setw(digits) << std::setfill('0') << s;
      write_generated(src, family[s], fs::path(a.out) / name.str());
    }
    io::write_file_atomic(fs::path(a.out) / "source.json", synth::to_json(src).dump() + "\n");
    summary["suites"] = a.suites;
    summary["suite_size"] = a.suite_size;
  } else {
    synth::GenerateOptions go;
    go.n_traces = a.traces;
    go.t_len = a.t_len;
    go.perturbation = a.perturbation;
    go.stream = a.stream;
    go.role = parse_role(a.role);
    go.id = fs::path(a.out).filename().string();
    go.workers = g.workers;
    write_generated(src, synth::generate(src, go), a.out);
    summary["traces"] = a.traces;
  }
  const Format f = parse_format(g.format);
  if (f == Format::json) {
    print_json(out, summary);
  } else {
    out << "wrote " << a.out << '\n';
  }
  return 0;
}

// ---- sweep-k ----

struct SweepArgs {
  std::string traces;
  std::vector<std::size_t> k_list;
  std::optional<std::uint64_t> seed;
  int exponent = 10;
  std::size_t neighbors = 8;
  std::string projection = "none";
  std::size_t projection_dim = 3;
};

struct SweepEntry {
  std::size_t k = 0;
  SmScore score;
};

struct SweepReport {
  std::vector<SweepEntry> entries;
  std::optional<std::size_t> recommended;  // a K value
};

// argmax Goodness over candidates with Scale >= 1; ties go to the smaller K.
inline std::optional<std::size_t> recommend_k(const std::vector<SweepEntry>& entries) {
  std::optional<std::size_t> best;
  double best_goodness = -1.0;
  for (const auto& e : entries) {
    if (e.score.scale < 1.0) continue;
    if (e.score.goodness > best_goodness ||
        (e.score.goodness == best_goodness && best && e.k < *best)) {
      best = e.k;
      best_goodness = e.score.goodness;
    }
  }
  return best;
}

inline SweepReport sweep_k(const TraceSet& training, const std::vector<std::size_t>& k_list,
                           ExtractOptions base, int exponent = 10) {
  if (k_list.empty()) throw UsageError("k list is empty");
  SweepReport r;
  for (auto k : k_list) {
    base.k = k;
    base.method = ExtractMethod::kmeans;
    r.entries.push_back({k, score(extract(training, base), exponent)});
  }
  r.recommended = recommend_k(r.entries);
  return r;
}

inline int cmd_sweep(const SweepArgs& a, const Global& g, std::ostream& out) {
  if (!a.seed) throw UsageError("sweep-k needs an explicit --seed");
  ExtractOptions opt;
  opt.seed = *a.seed;
  opt.neighbor_count = a.neighbors;
  if (a.projection != "none") opt.projection = parse_projection_kind(a.projection);
  opt.projection_dim = a.projection_dim;
  opt.workers = g.workers;
  const auto report = sweep_k(load_bundle(a.traces), a.k_list, opt, a.exponent);

  const Format f = parse_format(g.format);
  if (f == Format::json) {
    json entries = json::array();
    for (const auto& e : report.entries) {
      json j = to_json(e.score);
      j["k"] = e.k;
      entries.push_back(j);
    }
    print_json(out, {{"seed", *a.seed},
                     {"entries", entries},
                     {"recommended_k", report.recommended ? json(*report.recommended) : json()}});
    return 0;
  }
  Table t{{"k", "purity", "richness", "goodness", "scale", "recommended"}, {}};
  for (const auto& e : report.entries) {
    t.rows.push_back({std::to_string(e.k), fmt(e.score.purity), fmt(e.score.richness),
                      fmt(e.score.goodness), fmt(e.score.scale),
                      report.recommended == e.k ? "*" : (e.score.scale < 1.0 ? "scale<1" : "")});
  }
  t.print(out, f);
  return 0;
}

// ---- infer ----

struct InferArgs {
  std::string model;
  std::string inputs;
  std::string out;
  std::string role = "test";
};

inline int cmd_infer(const InferArgs& a, const Global& g, std::ostream& out) {
  check_output(a.out, {a.model, a.inputs}, g.force);
  const auto model = rnn::load_model(a.model);
  auto set = rnn::run_batch(model, rnn::load_inputs(a.inputs), g.workers, parse_role(a.role));
  set.id = fs::path(a.out).filename().string();
  save_trace_bundle(set, a.out);
  if (parse_format(g.format) == Format::json) {
    print_json(out, {{"output", a.out}, {"traces", set.size()}, {"dimension", set.dimension}});
  } else {
    out << "wrote " << set.size() << " traces to " << a.out << '\n';
  }
  return 0;
}

// ---- entry point ----

inline void report_error(std::ostream& err, const char* kind, const std::string& message) {
  err << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::istream& in = std::cin, std::ostream& err = std::cerr) {
  CLI::App app{"State-machine abstraction, coverage and error prediction for RNN traces"};
  app.set_config("--config", "", "TOML file with option defaults; flags override it");
  Global g;
  g.workers = default_workers();
  app.add_option("--workers", g.workers, "Worker threads (does not change results)")
      ->check(CLI::PositiveNumber);
  app.add_option("--format", g.format, "Output format")
      ->check(CLI::IsMember({"json", "table", "csv"}));
  app.add_flag("--force", g.force, "Replace existing output artifacts");
  app.require_subcommand(1);

  ExtractArgs ex;
  auto* extract_cmd = app.add_subcommand("extract", "Extract a state machine from training traces");
  extract_cmd->add_option("--traces", ex.traces, "Training trace bundle")->required();
  extract_cmd->add_option("--method", ex.method, "kmeans, grid or fixed");
  extract_cmd->add_option("--k", ex.k, "Number of K-Means states");
  extract_cmd->add_option("--grid-cells", ex.grid_cells, "Grid cells per dimension");
  extract_cmd->add_option("--neighbors", ex.neighbors, "Neighbour count for the radius rule");
  extract_cmd->add_option("--projection", ex.projection, "none, pca or lda");
  extract_cmd->add_option("--projection-dim", ex.projection_dim, "Projected dimension");
  extract_cmd->add_option("--centroids", ex.centroids, "JSON centroid list for --method fixed");
  extract_cmd->add_option("--seed", ex.seed, "Random seed");
  extract_cmd->add_option("--out", ex.out, "State machine JSON")->required();

  ScoreArgs sc;
  auto* score_cmd = app.add_subcommand("score", "Purity, Richness, Goodness and Scale");
  score_cmd->add_option("--sm", sc.sms, "State machine JSON (repeatable)")->required();
  score_cmd->add_option("--exponent", sc.exponent, "Purity exponent in Goodness");

  CoverageArgs cv;
  auto* coverage_cmd = app.add_subcommand("coverage", "Coverage criteria of test suites");
  coverage_cmd->add_option("--sm", cv.sm, "State machine JSON")->required();
  coverage_cmd->add_option("--suite", cv.suites, "Test suite bundle (repeatable)")->required();
  coverage_cmd->add_option("--criteria", cv.criteria, "Criteria to report (default all)")
      ->delimiter(',');

  KsArgs ks;
  auto* ks_cmd = app.add_subcommand("ks-test", "KS test of covered-subset accuracy per criterion");
  ks_cmd->add_option("--sm", ks.sms, "State machine JSON (repeatable)")->required();
  ks_cmd->add_option("--suites-dir", ks.suites_dir, "Directory of suite bundles")->required();
  ks_cmd->add_option("--criterion", ks.criteria, "Criteria (default all)")->delimiter(',');
  ks_cmd->add_option("--alpha", ks.alpha, "Significance level");
  ks_cmd->add_flag("--small-sample-correction", ks.correction,
                   "Use the (sqrt(n)+0.12+0.11/sqrt(n)) p-value correction");
  ks_cmd->add_option("--out", ks.out, "Write the CSV matrix here");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train-predictor", "Train the error-prediction tree");
  train_cmd->add_option("--sm", tr.sm, "State machine JSON")->required();
  train_cmd->add_option("--train-suite", tr.train_suite, "Labeled bundle to train on")->required();
  train_cmd->add_option("--eval-suite", tr.eval_suite, "Labeled held-out bundle");
  train_cmd->add_option("--max-depth", tr.max_depth, "Maximum tree depth");
  train_cmd->add_option("--min-leaf", tr.min_leaf, "Minimum samples per leaf");
  train_cmd->add_option("--prune-alpha", tr.prune_alpha, "Cost-complexity pruning strength");
  train_cmd->add_option("--seed", tr.seed, "Recorded seed");
  train_cmd->add_option("--out", tr.out, "Tree JSON")->required();

  PredictArgs pr;
  auto* predict_cmd = app.add_subcommand("predict", "Error probability per trace");
  predict_cmd->add_option("--sm", pr.sm, "State machine JSON")->required();
  predict_cmd->add_option("--tree", pr.tree, "Tree JSON")->required();
  predict_cmd->add_option("--traces", pr.traces, "Bundle to score (default: JSONL on stdin)");

  SynthArgs sy;
  auto* synth_cmd = app.add_subcommand("synth", "Generate planted synthetic trace bundles");
  synth_cmd->add_option("--out", sy.out, "Bundle directory (or parent for --suites)")->required();
  synth_cmd->add_option("--centers", sy.centers, "Planted centers");
  synth_cmd->add_option("--dim", sy.dim, "State dimension");
  synth_cmd->add_option("--labels", sy.labels, "Label count");
  synth_cmd->add_option("--mixed", sy.mixed, "Centers with a uniform label distribution");
  synth_cmd->add_option("--sigma", sy.sigma, "Noise standard deviation");
  synth_cmd->add_option("--separation", sy.separation, "Minimum center distance in sigmas");
  synth_cmd->add_option("--base-rate", sy.base_rate, "Base error probability");
  synth_cmd->add_option("--impurity-boost", sy.impurity_boost, "Error multiplier at mixed centers");
  synth_cmd->add_option("--purity-threshold", sy.purity_threshold, "Purity below which a center is mixed");
  synth_cmd->add_option("--oob-boost", sy.oob_boost, "Error multiplier off the manifold");
  synth_cmd->add_option("--seed", sy.seed, "Random seed");
  synth_cmd->add_option("--traces", sy.traces, "Traces in a single bundle");
  synth_cmd->add_option("--t-len", sy.t_len, "Timesteps per trace");
  synth_cmd->add_option("--perturbation", sy.perturbation, "Share of walks pushed off the manifold");
  synth_cmd->add_option("--role", sy.role, "training or test");
  synth_cmd->add_option("--stream", sy.stream, "Stream id for independent sets");
  synth_cmd->add_option("--suites", sy.suites, "Write this many test suites instead of one bundle");
  synth_cmd->add_option("--suite-size", sy.suite_size, "Traces per suite");

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep-k", "Score one K-Means state machine per K");
  sweep_cmd->add_option("--traces", sw.traces, "Training trace bundle")->required();
  sweep_cmd->add_option("--k-list", sw.k_list, "Comma-separated K values")->required()->delimiter(',');
  sweep_cmd->add_option("--seed", sw.seed, "Random seed");
  sweep_cmd->add_option("--exponent", sw.exponent, "Purity exponent in Goodness");
  sweep_cmd->add_option("--neighbors", sw.neighbors, "Neighbour count for the radius rule");
  sweep_cmd->add_option("--projection", sw.projection, "none, pca or lda");
  sweep_cmd->add_option("--projection-dim", sw.projection_dim, "Projected dimension");

  InferArgs inf;
  auto* infer_cmd = app.add_subcommand("infer", "Run exported RNN weights over input sequences");
  infer_cmd->add_option("--model", inf.model, "Weights JSON")->required();
  infer_cmd->add_option("--inputs", inf.inputs, "JSONL input sequences")->required();
  infer_cmd->add_option("--out", inf.out, "Trace bundle directory")->required();
  infer_cmd->add_option("--role", inf.role, "training or test");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what());
    return static_cast<int>(ExitCode::usage);
  }

  try {
    if (*extract_cmd) return cmd_extract(ex, g, out);
    if (*score_cmd) return cmd_score(sc, g, out);
    if (*coverage_cmd) return cmd_coverage(cv, g, out);
    if (*ks_cmd) return cmd_ks(ks, g, out);
    if (*train_cmd) return cmd_train(tr, g, out);
    if (*predict_cmd) return cmd_predict(pr, g, out, in);
    if (*synth_cmd) return cmd_synth(sy, g, out);
    if (*sweep_cmd) return cmd_sweep(sw, g, out);
    if (*infer_cmd) return cmd_infer(inf, g, out);
  } catch (const UsageError& e) {
    report_error(err, "usage", e.what());
    return static_cast<int>(ExitCode::usage);
  } catch (const DataError& e) {
    report_error(err, "data", e.what());
    return static_cast<int>(ExitCode::data);
  } catch (const std::exception& e) {
    report_error(err, "internal", e.what());
    return static_cast<int>(ExitCode::internal);
  }
  report_error(err, "usage", "unknown subcommand");
  return static_cast<int>(ExitCode::usage);
}

}  // namespace smcov::cli
