#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "smcov/error.hpp"
#include "smcov/io.hpp"

namespace smcov {

using StateVector = std::vector<double>;
using Label = std::optional<std::size_t>;

// One input's hidden-state trace. Only the final timestep carries labels.
struct Trace {
  std::string id;
  std::vector<StateVector> states;
  Label predicted_label;
  Label true_label;

  std::size_t length() const { return states.size(); }
  const StateVector& final_state() const { return states.back(); }

  bool operator==(const Trace&) const = default;
};

enum class TraceRole { training, test };

inline const char* to_string(TraceRole role) {
  return role == TraceRole::training ? "training" : "test";
}

inline TraceRole parse_role(const std::string& s) {
  if (s == "training") return TraceRole::training;
  if (s == "test") return TraceRole::test;
  throw DataError("unknown trace role '" + s + "'");
}

struct TraceSet {
  std::string id;  // optional bundle name
  std::vector<Trace> traces;
  std::size_t label_count = 2;
  std::vector<std::string> labels;  // index -> name; may be empty
  TraceRole role = TraceRole::training;
  std::size_t dimension = 0;

  std::size_t size() const { return traces.size(); }
  bool empty() const { return traces.empty(); }

  std::size_t max_timesteps() const {
    std::size_t mts = 0;
    for (const auto& t : traces) mts = std::max(mts, t.length());
    return mts;
  }

  bool operator==(const TraceSet&) const = default;
};

struct LabeledOutcome {
  std::string trace_id;
  bool error = false;
};

// Throws DataError describing the first violated invariant.
inline void validate_trace(const Trace& t, std::size_t dimension,
                           std::size_t label_count) {
  if (t.states.empty()) {
    throw DataError("trace '" + t.id + "' has no timesteps");
  }
  for (std::size_t j = 0; j < t.states.size(); ++j) {
    const auto& s = t.states[j];
    if (s.size() != dimension) {
      std::ostringstream msg;
      msg << "dimension mismatch in trace '" << t.id << "' at step " << j
          << ": expected " << dimension << ", got " << s.size();
      throw DataError(msg.str());
    }
    for (double v : s) {
      if (!std::isfinite(v)) {
        throw DataError("non-finite value in trace '" + t.id + "' at step " +
                        std::to_string(j));
      }
    }
  }
  for (const Label& l : {t.predicted_label, t.true_label}) {
    if (l && *l >= label_count) {
      throw DataError("unknown label index " + std::to_string(*l) +
                      " in trace '" + t.id + "'");
    }
  }
}

inline void validate(const TraceSet& set) {
  if (set.label_count < 2) throw DataError("label_count must be at least 2");
  if (!set.labels.empty() && set.labels.size() != set.label_count) {
    throw DataError("label name count does not match label_count");
  }
  if (set.dimension == 0 && !set.empty()) {
    throw DataError("dimension must be positive");
  }
  for (const auto& t : set.traces) {
    validate_trace(t, set.dimension, set.label_count);
  }
}

namespace detail {

inline Label label_from_json(const nlohmann::json& j, const char* key,
                             std::size_t line) {
  if (!j.contains(key)) {
    throw DataError("line " + std::to_string(line) + ": missing '" + key + "'");
  }
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  if (!v.is_number_integer()) {
    throw DataError("line " + std::to_string(line) + ": '" + key +
                    "' must be an integer or null");
  }
  const auto value = v.get<long long>();
  if (value < 0) {
    throw DataError("line " + std::to_string(line) + ": unknown label index " +
                    std::to_string(value));
  }
  return static_cast<std::size_t>(value);
}

inline bool has_non_finite_literal(const std::string& line) {
  static const std::regex token(R"((^|[\[,:\s])-?(NaN|nan|Infinity|inf)\b)");
  return std::regex_search(line, token);
}

inline std::string label_json(const Label& l) {
  return l ? std::to_string(*l) : "null";
}

}  // namespace detail

// Parses one traces.jsonl record. `line` is 1-based and only used in messages.
inline Trace parse_trace_record(const std::string& text, std::size_t line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    if (detail::has_non_finite_literal(text)) {
      throw DataError("line " + std::to_string(line) + ": non-finite value");
    }
    throw DataError("line " + std::to_string(line) +
                    ": malformed record: " + e.what());
  }
  if (!j.is_object()) {
    throw DataError("line " + std::to_string(line) + ": record is not an object");
  }
  Trace t;
  try {
    t.id = j.at("id").get<std::string>();
    t.predicted_label = detail::label_from_json(j, "predicted_label", line);
    t.true_label = detail::label_from_json(j, "true_label", line);
    for (const auto& step : j.at("states")) {
      StateVector v;
      v.reserve(step.size());
      for (const auto& x : step) {
        if (!x.is_number()) {
          throw DataError("line " + std::to_string(line) + ": non-numeric activation");
        }
        v.push_back(x.get<double>());
      }
      t.states.push_back(std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("line " + std::to_string(line) + ": malformed record: " + e.what());
  }
  for (const auto& s : t.states) {
    for (double v : s) {
      if (!std::isfinite(v)) {
        throw DataError("line " + std::to_string(line) + ": non-finite value");
      }
    }
  }
  return t;
}

inline std::string trace_record_json(const Trace& t) {
  std::string out;
  out += "{\"id\":";
  out += nlohmann::json(t.id).dump();
  out += ",\"predicted_label\":" + detail::label_json(t.predicted_label);
  out += ",\"true_label\":" + detail::label_json(t.true_label);
  out += ",\"states\":[";
  for (std::size_t j = 0; j < t.states.size(); ++j) {
    if (j) out += ',';
    out += '[';
    for (std::size_t d = 0; d < t.states[j].size(); ++d) {
      if (d) out += ',';
      out += io::format_double(t.states[j][d]);
    }
    out += ']';
  }
  out += "]}";
  return out;
}

inline nlohmann::json manifest_json(const TraceSet& set) {
  nlohmann::json labels = nlohmann::json::array();
  for (std::size_t l = 0; l < set.label_count; ++l) {
    labels.push_back(set.labels.empty() ? std::to_string(l) : set.labels[l]);
  }
  nlohmann::json j = {{"version", 1},
                      {"dimension", set.dimension},
                      {"label_count", set.label_count},
                      {"labels", labels},
                      {"role", to_string(set.role)},
                      {"trace_count", set.traces.size()},
                      {"max_timesteps", set.max_timesteps()}};
  if (!set.id.empty()) j["id"] = set.id;
  return j;
}

// Reads a bundle directory (manifest.json + traces.jsonl), preserving record
// order and validating every invariant.
inline TraceSet load_trace_bundle(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    throw DataError("trace bundle '" + dir.string() + "' is not a directory");
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest.json: " + std::string(e.what()));
  }

  TraceSet set;
  std::size_t expected_count = 0;
  std::size_t expected_mts = 0;
  try {
    if (manifest.at("version").get<int>() != 1) {
      throw DataError("unsupported bundle version");
    }
    set.dimension = manifest.at("dimension").get<std::size_t>();
    set.label_count = manifest.at("label_count").get<std::size_t>();
    set.labels = manifest.at("labels").get<std::vector<std::string>>();
    set.role = parse_role(manifest.at("role").get<std::string>());
    expected_count = manifest.at("trace_count").get<std::size_t>();
    expected_mts = manifest.at("max_timesteps").get<std::size_t>();
    set.id = manifest.value("id", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest.json: " + std::string(e.what()));
  }

  std::ifstream in(dir / "traces.jsonl");
  if (!in) throw DataError("cannot open " + (dir / "traces.jsonl").string());
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    Trace t = parse_trace_record(text, line);
    try {
      validate_trace(t, set.dimension, set.label_count);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line) + ": " + e.what());
    }
    set.traces.push_back(std::move(t));
  }
  if (set.traces.size() != expected_count) {
    throw DataError("manifest trace_count " + std::to_string(expected_count) +
                    " does not match " + std::to_string(set.traces.size()) +
                    " records");
  }
  if (set.max_timesteps() != expected_mts) {
    throw DataError("manifest max_timesteps does not match the records");
  }
  validate(set);
  return set;
}

inline void save_trace_bundle(const TraceSet& set,
                              const std::filesystem::path& dir) {
  validate(set);
  std::filesystem::create_directories(dir);
  std::string body;
  for (const auto& t : set.traces) {
    body += trace_record_json(t);
    body += '\n';
  }
  io::write_file_atomic(dir / "traces.jsonl", body);
  io::write_file_atomic(dir / "manifest.json", manifest_json(set).dump(2) + "\n");
}

inline std::vector<LabeledOutcome> derive_outcomes(const TraceSet& set) {
  std::vector<LabeledOutcome> out;
  out.reserve(set.size());
  for (const auto& t : set.traces) {
    if (!t.predicted_label || !t.true_label) {
      throw DataError("trace '" + t.id + "' has a null label");
    }
    out.push_back({t.id, *t.predicted_label != *t.true_label});
  }
  return out;
}

inline double error_rate(const std::vector<LabeledOutcome>& outcomes) {
  if (outcomes.empty()) return 0.0;
  std::size_t errors = 0;
  for (const auto& o : outcomes) errors += o.error ? 1 : 0;
  return static_cast<double>(errors) / static_cast<double>(outcomes.size());
}

}  // namespace smcov
