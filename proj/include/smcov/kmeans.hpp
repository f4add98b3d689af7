#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "smcov/error.hpp"
#include "smcov/parallel.hpp"
#include "smcov/trace.hpp"

namespace smcov {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

inline double distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

// Index of the closest centroid; ties go to the lowest index.
inline std::size_t nearest_index(const std::vector<StateVector>& centroids,
                                 std::span<const double> p, double* sq_dist = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(centroids[c], p);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (sq_dist) *sq_dist = best_d;
  return best;
}

struct KMeansOptions {
  std::size_t max_iterations = 300;
  double tolerance = 1e-6;  // stop once no centroid moves farther than this
  std::size_t workers = 1;
};

struct KMeansResult {
  std::vector<StateVector> centroids;
  std::vector<std::size_t> assignment;
  // Inertia after each assignment step, first entry from the seeded centroids.
  std::vector<double> inertia_history;
  std::size_t iterations = 0;

  double inertia() const { return inertia_history.back(); }
};

inline double inertia(const std::vector<StateVector>& points,
                      const std::vector<StateVector>& centroids) {
  double total = 0.0;
  for (const auto& p : points) {
    double d = 0.0;
    nearest_index(centroids, p, &d);
    total += d;
  }
  return total;
}

// k-means++ seeding.
inline std::vector<StateVector> kmeans_plus_plus(const std::vector<StateVector>& points,
                                                 std::size_t k, std::mt19937_64& rng) {
  std::vector<StateVector> centroids;
  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
  centroids.push_back(points[pick(rng)]);
  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    d2[i] = squared_distance(points[i], centroids[0]);
  }
  while (centroids.size() < k) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t chosen = 0;
    if (total > 0.0) {
      const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      chosen = points.size() - 1;
      for (std::size_t i = 0; i < points.size(); ++i) {
        acc += d2[i];
        if (u < acc && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    centroids.push_back(points[chosen]);
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
    }
  }
  return centroids;
}

// Lloyd iterations from k-means++ seeds. Inertia is checked after every
// assignment step and must never increase.
inline KMeansResult kmeans(const std::vector<StateVector>& points, std::size_t k,
                           std::uint64_t seed, const KMeansOptions& options = {}) {
  if (points.empty()) throw DataError("k-means needs at least one point");
  if (k < 1) throw UsageError("k-means needs K >= 1");
  if (k > points.size()) {
    throw DataError("K = " + std::to_string(k) + " exceeds the number of points (" +
                    std::to_string(points.size()) + ")");
  }
  const std::size_t dim = points.front().size();
  std::mt19937_64 rng(seed);

  KMeansResult result;
  result.centroids = kmeans_plus_plus(points, k, rng);
  result.assignment.assign(points.size(), 0);
  std::vector<double> dist(points.size());

  auto assign = [&] {
    parallel_for(points.size(), options.workers, [&](std::size_t i) {
      result.assignment[i] = nearest_index(result.centroids, points[i], &dist[i]);
    });
    double total = 0.0;
    for (double d : dist) total += d;
    if (!result.inertia_history.empty()) {
      const double prev = result.inertia_history.back();
      if (total > prev + 1e-9 * prev + 1e-12) {
        throw InternalError("k-means inertia increased from " + std::to_string(prev) +
                            " to " + std::to_string(total));
      }
    }
    result.inertia_history.push_back(total);
  };

  assign();
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    std::vector<StateVector> sums(k, StateVector(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto& s = sums[result.assignment[i]];
      for (std::size_t d = 0; d < dim; ++d) s[d] += points[i][d];
      ++counts[result.assignment[i]];
    }
    double movement = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      StateVector next;
      if (counts[c] > 0) {
        next = sums[c];
        for (double& v : next) v /= static_cast<double>(counts[c]);
      } else {
        // Reseed an empty cluster at the point farthest from its centroid.
        std::size_t far = 0;
        for (std::size_t i = 1; i < points.size(); ++i) {
          if (dist[i] > dist[far]) far = i;
        }
        next = points[far];
        dist[far] = 0.0;
      }
      movement = std::max(movement, distance(next, result.centroids[c]));
      result.centroids[c] = std::move(next);
    }
    result.iterations = iter + 1;
    assign();
    if (movement < options.tolerance) break;
  }
  return result;
}

}  // namespace smcov
