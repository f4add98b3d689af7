#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "smcov/error.hpp"
#include "smcov/io.hpp"
#include "smcov/parallel.hpp"
#include "smcov/trace.hpp"

namespace smcov::rnn {

enum class CellKind { srnn, lstm, gru };

inline const char* to_string(CellKind k) {
  switch (k) {
    case CellKind::srnn: return "srnn";
    case CellKind::lstm: return "lstm";
    case CellKind::gru: return "gru";
  }
  return "?";
}

inline CellKind parse_cell_kind(const std::string& s) {
  if (s == "srnn") return CellKind::srnn;
  if (s == "lstm") return CellKind::lstm;
  if (s == "gru") return CellKind::gru;
  throw DataError("unsupported cell kind '" + s + "'");
}

// Gate names in storage order for each cell kind.
inline std::vector<std::string> gate_names(CellKind k) {
  switch (k) {
    case CellKind::srnn: return {"h"};
    case CellKind::lstm: return {"f", "i", "o", "c"};
    case CellKind::gru: return {"z", "r", "u"};
  }
  return {};
}

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  // out += M * v
  void accumulate(std::span<const double> v, std::span<double> out) const {
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      const double* row = data.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) acc += row[c] * v[c];
      out[r] += acc;
    }
  }

  bool operator==(const Matrix&) const = default;
};

struct GateWeights {
  Matrix W;               // hidden_dim x input_dim
  Matrix U;               // hidden_dim x hidden_dim
  std::vector<double> b;  // hidden_dim

  bool operator==(const GateWeights&) const = default;
};

struct RnnCell {
  CellKind kind = CellKind::srnn;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::vector<GateWeights> gates;  // ordered as gate_names(kind)

  const GateWeights& gate(std::size_t i) const { return gates.at(i); }
  bool operator==(const RnnCell&) const = default;
};

struct Readout {
  Matrix W;  // label_count x hidden_dim of the last layer
  std::vector<double> b;
  bool operator==(const Readout&) const = default;
};

// A chain of recurrent cells; layer i+1 consumes layer i's h. The stored
// state vector is the concatenation of every layer's h.
struct RnnModel {
  std::vector<RnnCell> layers;
  Readout readout;
  std::vector<std::string> labels;

  std::size_t input_dim() const { return layers.front().input_dim; }
  std::size_t state_dim() const {
    std::size_t d = 0;
    for (const auto& l : layers) d += l.hidden_dim;
    return d;
  }
  std::size_t label_count() const { return readout.b.size(); }
};

struct CellState {
  StateVector h;
  StateVector c;  // LSTM only; empty otherwise

  bool operator==(const CellState&) const = default;
};

inline CellState initial_state(const RnnCell& cell) {
  CellState s;
  s.h.assign(cell.hidden_dim, 0.0);
  if (cell.kind == CellKind::lstm) s.c.assign(cell.hidden_dim, 0.0);
  return s;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Gate activations from one step, keyed by gate name ("f", "i", "o", "c~",
// "z", "r", "u").
using GateActivations = std::map<std::string, StateVector>;

namespace detail {

inline StateVector preactivation(const GateWeights& g, std::span<const double> x,
                                 std::span<const double> h) {
  StateVector out(g.b);
  g.W.accumulate(x, out);
  g.U.accumulate(h, out);
  return out;
}

template <typename F>
void apply(StateVector& v, F&& f) {
  for (double& x : v) x = f(x);
}

}  // namespace detail

inline CellState step(const RnnCell& cell, const CellState& state,
                      std::span<const double> x,
                      GateActivations* gates = nullptr) {
  if (x.size() != cell.input_dim) {
    throw DataError("input dimension mismatch: expected " +
                    std::to_string(cell.input_dim) + ", got " +
                    std::to_string(x.size()));
  }
  if (state.h.size() != cell.hidden_dim) {
    throw DataError("state dimension mismatch");
  }
  const std::size_t n = cell.hidden_dim;
  CellState next;
  switch (cell.kind) {
    case CellKind::srnn: {
      next.h = detail::preactivation(cell.gate(0), x, state.h);
      detail::apply(next.h, [](double v) { return std::tanh(v); });
      break;
    }
    case CellKind::lstm: {
      auto f = detail::preactivation(cell.gate(0), x, state.h);
      auto i = detail::preactivation(cell.gate(1), x, state.h);
      auto o = detail::preactivation(cell.gate(2), x, state.h);
      auto cand = detail::preactivation(cell.gate(3), x, state.h);
      detail::apply(f, sigmoid);
      detail::apply(i, sigmoid);
      detail::apply(o, sigmoid);
      detail::apply(cand, [](double v) { return std::tanh(v); });
      next.c.resize(n);
      next.h.resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        next.c[k] = f[k] * state.c[k] + i[k] * cand[k];
        next.h[k] = o[k] * std::tanh(next.c[k]);
      }
      if (gates) *gates = {{"f", f}, {"i", i}, {"o", o}, {"c~", cand}};
      break;
    }
    case CellKind::gru: {
      auto z = detail::preactivation(cell.gate(0), x, state.h);
      auto r = detail::preactivation(cell.gate(1), x, state.h);
      detail::apply(z, sigmoid);
      detail::apply(r, sigmoid);
      StateVector gated(n);
      for (std::size_t k = 0; k < n; ++k) gated[k] = r[k] * state.h[k];
      auto u = detail::preactivation(cell.gate(2), x, gated);
      detail::apply(u, [](double v) { return std::tanh(v); });
      next.h.resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        next.h[k] = z[k] * state.h[k] + (1.0 - z[k]) * u[k];
      }
      if (gates) *gates = {{"z", z}, {"r", r}, {"u", u}};
      break;
    }
  }
  return next;
}

// Index of the largest readout logit; ties resolve to the lowest index.
inline std::size_t classify(const Readout& readout, std::span<const double> h) {
  StateVector logits(readout.b);
  readout.W.accumulate(h, logits);
  std::size_t best = 0;
  for (std::size_t l = 1; l < logits.size(); ++l) {
    if (logits[l] > logits[best]) best = l;
  }
  return best;
}

inline Trace run(const RnnModel& model, const std::vector<StateVector>& inputs,
                 std::string id = {}, Label true_label = std::nullopt) {
  if (inputs.empty()) throw DataError("input sequence is empty");
  std::vector<CellState> states;
  for (const auto& layer : model.layers) states.push_back(initial_state(layer));

  Trace trace;
  trace.id = std::move(id);
  trace.true_label = true_label;
  trace.states.reserve(inputs.size());
  for (const auto& x : inputs) {
    std::span<const double> layer_input(x);
    StateVector stored;
    stored.reserve(model.state_dim());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      states[l] = step(model.layers[l], states[l], layer_input);
      layer_input = states[l].h;
      stored.insert(stored.end(), states[l].h.begin(), states[l].h.end());
    }
    trace.states.push_back(std::move(stored));
  }
  trace.predicted_label = classify(model.readout, states.back().h);
  return trace;
}

struct InputSequence {
  std::string id;
  std::vector<StateVector> inputs;
  Label true_label;
};

// Runs every sequence; output order follows input order for any worker count.
inline TraceSet run_batch(const RnnModel& model,
                          const std::vector<InputSequence>& batch,
                          std::size_t workers = 1,
                          TraceRole role = TraceRole::training) {
  TraceSet set;
  set.role = role;
  set.dimension = model.state_dim();
  set.label_count = model.label_count();
  set.labels = model.labels;
  set.traces.resize(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t i) {
    set.traces[i] = run(model, batch[i].inputs, batch[i].id, batch[i].true_label);
  });
  return set;
}

// ---- JSON weight files ----

namespace detail {

inline Matrix matrix_from_json(const nlohmann::json& j, std::size_t rows,
                               std::size_t cols, const std::string& what) {
  if (!j.is_array() || j.size() != rows) {
    throw DataError(what + ": expected " + std::to_string(rows) + " rows");
  }
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw DataError(what + ": row " + std::to_string(r) + " must have " +
                      std::to_string(cols) + " columns");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = j[r][c].get<double>();
      if (!std::isfinite(v)) throw DataError(what + ": non-finite value");
      m(r, c) = v;
    }
  }
  return m;
}

inline std::vector<double> vector_from_json(const nlohmann::json& j,
                                            std::size_t n,
                                            const std::string& what) {
  if (!j.is_array() || j.size() != n) {
    throw DataError(what + ": expected length " + std::to_string(n));
  }
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = j[i].get<double>();
    if (!std::isfinite(v[i])) throw DataError(what + ": non-finite value");
  }
  return v;
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c = 0; c < m.cols; ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline RnnCell cell_from_json(const nlohmann::json& j) {
  RnnCell cell;
  cell.kind = parse_cell_kind(j.at("cell").get<std::string>());
  cell.input_dim = j.at("input_dim").get<std::size_t>();
  cell.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  if (cell.input_dim == 0 || cell.hidden_dim == 0) {
    throw DataError("input_dim and hidden_dim must be positive");
  }
  for (const auto& name : gate_names(cell.kind)) {
    const nlohmann::json* g = nullptr;
    if (j.contains("gates") && j["gates"].contains(name)) {
      g = &j["gates"][name];
    } else if (cell.kind == CellKind::srnn && j.contains("W")) {
      g = &j;  // S-RNN weights may sit at the top level
    } else {
      throw DataError(std::string("missing gate '") + name + "' for " +
                      to_string(cell.kind));
    }
    GateWeights w;
    w.W = matrix_from_json(g->at("W"), cell.hidden_dim, cell.input_dim, name + ".W");
    w.U = matrix_from_json(g->at("U"), cell.hidden_dim, cell.hidden_dim, name + ".U");
    w.b = vector_from_json(g->at("b"), cell.hidden_dim, name + ".b");
    cell.gates.push_back(std::move(w));
  }
  return cell;
}

inline nlohmann::json cell_to_json(const RnnCell& cell) {
  nlohmann::json j = {{"cell", to_string(cell.kind)},
                      {"input_dim", cell.input_dim},
                      {"hidden_dim", cell.hidden_dim}};
  const auto names = gate_names(cell.kind);
  if (cell.kind == CellKind::srnn) {
    j["W"] = matrix_to_json(cell.gates[0].W);
    j["U"] = matrix_to_json(cell.gates[0].U);
    j["b"] = cell.gates[0].b;
    return j;
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    j["gates"][names[i]] = {{"W", matrix_to_json(cell.gates[i].W)},
                            {"U", matrix_to_json(cell.gates[i].U)},
                            {"b", cell.gates[i].b}};
  }
  return j;
}

}  // namespace detail

inline RnnModel model_from_json(const nlohmann::json& j) {
  RnnModel model;
  try {
    if (j.contains("layers")) {
      for (const auto& layer : j.at("layers")) {
        model.layers.push_back(detail::cell_from_json(layer));
      }
    } else {
      model.layers.push_back(detail::cell_from_json(j));
    }
    if (model.layers.empty()) throw DataError("model has no layers");
    for (std::size_t l = 1; l < model.layers.size(); ++l) {
      if (model.layers[l].input_dim != model.layers[l - 1].hidden_dim) {
        throw DataError("layer " + std::to_string(l) +
                        " input_dim does not match previous hidden_dim");
      }
    }
    const auto& ro = j.at("readout");
    const std::size_t hidden = model.layers.back().hidden_dim;
    const std::size_t labels = ro.at("b").size();
    if (labels < 2) throw DataError("readout must have at least 2 labels");
    model.readout.W = detail::matrix_from_json(ro.at("W"), labels, hidden, "readout.W");
    model.readout.b = detail::vector_from_json(ro.at("b"), labels, "readout.b");
    if (j.contains("labels")) {
      model.labels = j.at("labels").get<std::vector<std::string>>();
      if (model.labels.size() != labels) {
        throw DataError("labels length does not match readout");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed weight file: ") + e.what());
  }
  return model;
}

inline nlohmann::json model_to_json(const RnnModel& model) {
  nlohmann::json j;
  if (model.layers.size() == 1) {
    j = detail::cell_to_json(model.layers[0]);
  } else {
    j["layers"] = nlohmann::json::array();
    for (const auto& l : model.layers) j["layers"].push_back(detail::cell_to_json(l));
  }
  j["readout"] = {{"W", detail::matrix_to_json(model.readout.W)},
                  {"b", model.readout.b}};
  j["labels"] = model.labels;
  return j;
}

inline RnnModel load_model(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("malformed weight file: " + std::string(e.what()));
  }
  return model_from_json(j);
}

// Reads input sequences, one JSON object per line:
// {"id": str, "true_label": int|null, "inputs": [[f64 x input_dim] x T]}
inline std::vector<InputSequence> load_inputs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<InputSequence> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(text);
      InputSequence seq;
      seq.id = j.at("id").get<std::string>();
      if (j.contains("true_label") && !j["true_label"].is_null()) {
        seq.true_label = j["true_label"].get<std::size_t>();
      }
      seq.inputs = j.at("inputs").get<std::vector<StateVector>>();
      out.push_back(std::move(seq));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(line) + ": malformed input: " + e.what());
    }
  }
  return out;
}

}  // namespace smcov::rnn
