#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "smcov/error.hpp"

namespace smcov::stats {

struct KsResult {
  double d_statistic = 0.0;
  double p_value = 1.0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
};

// Survival function of the Kolmogorov distribution,
// Q(lambda) = 2 * sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2), clamped to [0, 1].
inline double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.18) {
    // Theta-function form; the alternating series converges badly here.
    constexpr double pi = 3.14159265358979323846;
    const double y = std::exp(-pi * pi / (8.0 * lambda * lambda));
    const double cdf = std::sqrt(2.0 * pi) / lambda * (y + std::pow(y, 9) + std::pow(y, 25) + std::pow(y, 49));
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double sum = 0.0;
  for (int k = 1; k <= 100000; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-10) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

// Sup-distance between the empirical CDFs of two samples, by merge-scan over
// the sorted samples. Tied values advance both sides before comparing.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double n1 = static_cast<double>(a.size());
  const double n2 = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n1 - static_cast<double>(j) / n2));
  }
  return d;
}

struct KsOptions {
  // Multiply sqrt(n_e) by the (1 + 0.12/sqrt(n_e) + 0.11/n_e) small-sample
  // correction before evaluating Q.
  bool small_sample_correction = false;
};

// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value
// Q(sqrt(n_e) * D), n_e = n1 n2 / (n1 + n2).
inline KsResult ks_two_sample(const std::vector<double>& a, const std::vector<double>& b,
                              const KsOptions& options = {}) {
  if (a.empty() || b.empty()) throw DataError("KS test needs two non-empty samples");
  KsResult r;
  r.n1 = a.size();
  r.n2 = b.size();
  r.d_statistic = ks_statistic(a, b);
  const double ne = static_cast<double>(r.n1) * static_cast<double>(r.n2) /
                    static_cast<double>(r.n1 + r.n2);
  const double root = std::sqrt(ne);
  const double factor = options.small_sample_correction ? root + 0.12 + 0.11 / root : root;
  r.p_value = kolmogorov_q(factor * r.d_statistic);
  return r;
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;   // starts at (0,0), ends at (1,1)
  std::vector<double> thresholds;  // descending distinct scores, one per point after the first
  double auc = 0.0;
};

// ROC curve over descending distinct score thresholds; tied scores share one
// point, so the trapezoidal AUC equals the Mann-Whitney U statistic with half
// credit for ties.
inline RocCurve roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) {
    throw DataError("scores and labels differ in length");
  }
  const auto positives =
      static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw DataError("ROC needs both positive and negative labels");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return scores[x] > scores[y]; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  double area = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    std::size_t step_tp = 0, step_fp = 0;
    while (i < order.size() && scores[order[i]] == threshold) {
      (labels[order[i]] ? step_tp : step_fp) += 1;
      ++i;
    }
    // Trapezoid in count space: fp step times mean tp height.
    area += static_cast<double>(step_fp) * (static_cast<double>(tp) + 0.5 * step_tp);
    tp += step_tp;
    fp += step_fp;
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                            static_cast<double>(tp) / static_cast<double>(positives)});
    curve.thresholds.push_back(threshold);
  }
  curve.auc = area / (static_cast<double>(positives) * static_cast<double>(negatives));
  return curve;
}

}  // namespace smcov::stats
