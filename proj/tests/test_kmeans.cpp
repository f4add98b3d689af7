#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "smcov/kmeans.hpp"
#include "smcov/synth.hpp"

using namespace smcov;

namespace {

std::vector<StateVector> gaussian_points(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<StateVector> pts(n, StateVector(dim));
  for (auto& p : pts) {
    for (double& v : p) v = g(rng);
  }
  return pts;
}

}  // namespace

TEST(KMeans, SingleClusterIsTheMean) {
  const auto pts = gaussian_points(257, 3, 1);
  const auto r = kmeans(pts, 1, 9);
  StateVector mean(3, 0.0);
  for (const auto& p : pts) {
    for (int d = 0; d < 3; ++d) mean[d] += p[d];
  }
  for (int d = 0; d < 3; ++d) EXPECT_NEAR(r.centroids[0][d], mean[d] / pts.size(), 1e-10);
}

TEST(KMeans, TwoPairs) {
  const std::vector<StateVector> pts{{0, 0}, {0, 1}, {10, 0}, {10, 1}};
  const auto r = kmeans(pts, 2, 4);
  std::vector<StateVector> c = r.centroids;
  std::sort(c.begin(), c.end());
  EXPECT_EQ(c[0], (StateVector{0.0, 0.5}));
  EXPECT_EQ(c[1], (StateVector{10.0, 0.5}));
  EXPECT_DOUBLE_EQ(r.inertia(), 1.0);
}

TEST(KMeans, InertiaNonIncreasingAndNearestAssignment) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto pts = gaussian_points(300, 2, 100 + seed);
    const auto r = kmeans(pts, 7, seed);
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i) {
      EXPECT_LE(r.inertia_history[i], r.inertia_history[i - 1] * (1 + 1e-12));
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double own = squared_distance(pts[i], r.centroids[r.assignment[i]]);
      for (const auto& c : r.centroids) EXPECT_LE(own, squared_distance(pts[i], c));
    }
    EXPECT_NEAR(r.inertia(), inertia(pts, r.centroids), 1e-9);
  }
}

// Best of many restarts is a stand-in for the global optimum.
TEST(KMeans, CloseToRestartOptimum) {
  const auto pts = gaussian_points(30, 2, 77);
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t s = 0; s < 200; ++s) best = std::min(best, kmeans(pts, 3, 1000 + s).inertia());
  std::size_t near = 0;
  for (std::uint64_t s = 0; s < 20; ++s) near += kmeans(pts, 3, s).inertia() <= 1.05 * best ? 1 : 0;
  EXPECT_GE(near, 10u);
}

TEST(KMeans, WorkerCountDoesNotChangeResult) {
  const auto pts = gaussian_points(2000, 4, 5);
  KMeansOptions one;
  const auto a = kmeans(pts, 9, 3, one);
  for (std::size_t w : {2, 3, 8}) {
    KMeansOptions o;
    o.workers = w;
    const auto b = kmeans(pts, 9, 3, o);
    EXPECT_EQ(a.centroids, b.centroids);
    EXPECT_EQ(a.assignment, b.assignment);
    EXPECT_EQ(a.inertia_history, b.inertia_history);
  }
}

TEST(KMeans, Errors) {
  EXPECT_THROW(kmeans({}, 1, 0), DataError);
  EXPECT_THROW(kmeans({{1.0}}, 0, 0), UsageError);
  EXPECT_THROW(kmeans({{1.0}, {2.0}}, 3, 0), DataError);
}

TEST(KMeans, DuplicatePointsStillGiveKCentroids) {
  std::vector<StateVector> pts(10, StateVector{1.0, 1.0});
  pts.push_back({5.0, 5.0});
  const auto r = kmeans(pts, 3, 2);
  EXPECT_EQ(r.centroids.size(), 3u);
  EXPECT_NEAR(r.inertia(), 0.0, 1e-12);
}

// Each recovered center lies within 3 sigma / sqrt(n_c) of its planted center,
// n_c being the number of points drawn around that center.
TEST(KMeans, RecoversPlantedCenters) {
  synth::SourceOptions so;
  so.centers = 6;
  so.noise_sigma = 0.1;
  so.separation = 20.0;
  so.seed = 3;
  const auto src = synth::make_source(so);
  synth::GenerateOptions go;
  go.n_traces = 500;
  const auto g = synth::generate(src, go);
  std::vector<StateVector> pts;
  std::vector<std::size_t> counts(src.center_count(), 0);
  for (std::size_t i = 0; i < g.set.size(); ++i) {
    for (std::size_t j = 0; j < g.set.traces[i].length(); ++j) {
      pts.push_back(g.set.traces[i].states[j]);
      ++counts[g.truth[i].centers[j]];
    }
  }
  const auto r = kmeans(pts, src.center_count(), 11);
  for (std::size_t c = 0; c < src.center_count(); ++c) {
    const auto& found = r.centroids[nearest_index(r.centroids, src.centers[c])];
    EXPECT_LE(distance(found, src.centers[c]), 3.0 * so.noise_sigma / std::sqrt(double(counts[c])))
        << "center " << c;
  }
}
