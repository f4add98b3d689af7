#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "smcov/trace.hpp"

namespace fs = std::filesystem;
using namespace smcov;
using fixtures::make_set;
using fixtures::make_trace;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("smcov_trace_" + name);
  fs::remove_all(dir);
  return dir;
}

void write_bundle(const fs::path& dir, const std::string& manifest, const std::string& lines) {
  fs::create_directories(dir);
  std::ofstream(dir / "manifest.json") << manifest;
  std::ofstream(dir / "traces.jsonl") << lines;
}

const char* kManifest2x3 =
    R"({"version":1,"dimension":3,"label_count":2,"labels":["a","b"],"role":"test","trace_count":2,"max_timesteps":2})";

}  // namespace

TEST(TraceBundle, LoadsHandWrittenBundle) {
  const auto dir = scratch("hand");
  write_bundle(dir, kManifest2x3,
               "{\"id\":\"x\",\"predicted_label\":0,\"true_label\":1,\"states\":[[1,2,3],[4,5,6]]}\n"
               "{\"id\":\"y\",\"predicted_label\":null,\"true_label\":null,\"states\":[[0.5,0,0]]}\n");
  const auto set = load_trace_bundle(dir);
  ASSERT_EQ(set.size(), 2u);
  EXPECT_EQ(set.dimension, 3u);
  EXPECT_EQ(set.role, TraceRole::test);
  EXPECT_EQ(set.traces[0].id, "x");
  EXPECT_EQ(set.traces[0].states[1][2], 6.0);
  EXPECT_EQ(set.traces[0].true_label, Label(1));
  EXPECT_FALSE(set.traces[1].predicted_label.has_value());
}

TEST(TraceBundle, NanActivationIsRejected) {
  const auto dir = scratch("nan");
  write_bundle(dir, kManifest2x3,
               "{\"id\":\"x\",\"predicted_label\":0,\"true_label\":1,\"states\":[[1,2,3]]}\n"
               "{\"id\":\"y\",\"predicted_label\":0,\"true_label\":0,\"states\":[[NaN,0,0]]}\n");
  try {
    load_trace_bundle(dir);
    FAIL() << "expected an error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite value"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(TraceBundle, MalformedRecordReportsLine) {
  const auto dir = scratch("bad");
  write_bundle(dir, kManifest2x3,
               "{\"id\":\"x\",\"predicted_label\":0,\"true_label\":1,\"states\":[[1,2,3]]}\n"
               "{\"id\":\"y\",\"predicted_label\":0,\n");
  try {
    load_trace_bundle(dir);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(TraceBundle, DimensionMismatchAndUnknownLabel) {
  auto dir = scratch("dim");
  write_bundle(dir, kManifest2x3,
               "{\"id\":\"x\",\"predicted_label\":0,\"true_label\":1,\"states\":[[1,2,3],[1,2]]}\n");
  EXPECT_THROW(load_trace_bundle(dir), DataError);
  dir = scratch("label");
  write_bundle(dir, kManifest2x3,
               "{\"id\":\"x\",\"predicted_label\":5,\"true_label\":1,\"states\":[[1,2,3]]}\n");
  EXPECT_THROW(load_trace_bundle(dir), DataError);
}

TEST(TraceBundle, EmptySetWritesZeroCount) {
  const auto dir = scratch("empty");
  TraceSet s;
  s.dimension = 4;
  save_trace_bundle(s, dir);
  const auto m = nlohmann::json::parse(io::read_file(dir / "manifest.json"));
  EXPECT_EQ(m["trace_count"], 0);
  EXPECT_EQ(load_trace_bundle(dir).size(), 0u);
}

TEST(TraceBundle, RoundTripRandomSets) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1e3);
  std::uniform_int_distribution<int> len(1, 6), lab(-1, 2);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Trace> traces;
    for (int i = 0; i < 15; ++i) {
      std::vector<StateVector> states(len(rng), StateVector(3));
      for (auto& s : states) {
        for (double& v : s) v = n(rng) * std::pow(10.0, lab(rng) * 50);
      }
      const int p = lab(rng), t = lab(rng);
      traces.push_back(make_trace("t" + std::to_string(i), states,
                                  p < 0 ? Label() : Label(static_cast<std::size_t>(p)),
                                  t < 0 ? Label() : Label(static_cast<std::size_t>(t))));
    }
    auto set = make_set(traces, 3, rep % 2 ? TraceRole::test : TraceRole::training);
    set.labels = {"a", "b", "c"};
    if (rep % 3 == 0) set.id = "named";
    const auto dir = scratch("rt");
    save_trace_bundle(set, dir);
    EXPECT_EQ(load_trace_bundle(dir), set);
  }
}

TEST(TraceBundle, SaveLoadSaveIsByteIdentical) {
  auto set = make_set({make_trace("a", {{0.1, 1e-300}, {-2.5, 3.0}}, 1, 0)});
  set.labels = {"neg", "pos"};
  const auto d1 = scratch("b1"), d2 = scratch("b2");
  save_trace_bundle(set, d1);
  save_trace_bundle(load_trace_bundle(d1), d2);
  EXPECT_EQ(io::read_file(d1 / "traces.jsonl"), io::read_file(d2 / "traces.jsonl"));
  EXPECT_EQ(io::read_file(d1 / "manifest.json"), io::read_file(d2 / "manifest.json"));
}

TEST(Outcomes, ErrorFlags) {
  auto set = make_set({make_trace("a", {{0.0}}, 3, 3), make_trace("b", {{0.0}}, 3, 7)}, 8);
  const auto o = derive_outcomes(set);
  ASSERT_EQ(o.size(), 2u);
  EXPECT_FALSE(o[0].error);
  EXPECT_TRUE(o[1].error);
  EXPECT_DOUBLE_EQ(error_rate(o), 0.5);
}

TEST(Outcomes, AllCorrectHasZeroRate) {
  auto set = make_set({make_trace("a", {{0.0}}, 1, 1), make_trace("b", {{0.0}}, 0, 0)});
  EXPECT_EQ(error_rate(derive_outcomes(set)), 0.0);
}

TEST(Outcomes, NullLabelNamesTrace) {
  auto set = make_set({make_trace("ok", {{0.0}}, 1, 1), make_trace("missing", {{0.0}}, 1)});
  try {
    derive_outcomes(set);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
  }
}
