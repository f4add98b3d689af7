#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "smcov/error.hpp"
#include "smcov/trace.hpp"

namespace smcov {

enum class ProjectionKind { pca, lda };

inline const char* to_string(ProjectionKind k) {
  return k == ProjectionKind::pca ? "pca" : "lda";
}

inline ProjectionKind parse_projection_kind(const std::string& s) {
  if (s == "pca") return ProjectionKind::pca;
  if (s == "lda") return ProjectionKind::lda;
  throw UsageError("unknown projection kind '" + s + "'");
}

// Affine map v -> basis * (v - mean). PCA rows are orthonormal; LDA rows are
// unit-length discriminant directions.
struct Projection {
  ProjectionKind kind = ProjectionKind::pca;
  StateVector mean;
  std::vector<StateVector> basis;  // output_dim rows of length input_dim
  // PCA: variance along each row. LDA: discriminant ratio of each row.
  std::vector<double> eigenvalues;

  std::size_t input_dim() const { return mean.size(); }
  std::size_t output_dim() const { return basis.size(); }

  bool operator==(const Projection&) const = default;
};

inline StateVector project(const Projection& p, std::span<const double> v) {
  if (v.size() != p.input_dim()) {
    throw DataError("projection dimension mismatch: expected " +
                    std::to_string(p.input_dim()) + ", got " +
                    std::to_string(v.size()));
  }
  StateVector out(p.output_dim(), 0.0);
  for (std::size_t r = 0; r < p.output_dim(); ++r) {
    double acc = 0.0;
    for (std::size_t d = 0; d < v.size(); ++d) {
      acc += p.basis[r][d] * (v[d] - p.mean[d]);
    }
    out[r] = acc;
  }
  return out;
}

namespace detail {

inline Eigen::MatrixXd to_matrix(const std::vector<StateVector>& points) {
  const auto n = static_cast<Eigen::Index>(points.size());
  const auto d = static_cast<Eigen::Index>(points.front().size());
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (points[i].size() != static_cast<std::size_t>(d)) {
      throw DataError("points have inconsistent dimensions");
    }
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = points[i][j];
  }
  return m;
}

// Unit-normalises the vector and flips its sign so the entry with the largest
// magnitude is positive (first such entry on ties).
inline StateVector canonical_direction(const Eigen::VectorXd& v) {
  const double norm = v.norm();
  StateVector out(static_cast<std::size_t>(v.size()));
  Eigen::Index arg = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (std::abs(v(i)) > std::abs(v(arg))) arg = i;
  }
  const double sign = v(arg) < 0 ? -1.0 : 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = sign * v(i) / norm;
  return out;
}

}  // namespace detail

inline Projection fit_pca(const std::vector<StateVector>& points, std::size_t k) {
  if (points.size() < 2) throw DataError("PCA needs at least 2 points");
  const std::size_t dim = points.front().size();
  if (k < 1 || k > dim) {
    throw UsageError("PCA output dimension must be in [1, " + std::to_string(dim) + "]");
  }
  const Eigen::MatrixXd x = detail::to_matrix(points);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(points.size() - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw DataError("PCA eigendecomposition failed");
  }
  Projection p;
  p.kind = ProjectionKind::pca;
  p.mean.assign(mean.data(), mean.data() + mean.size());
  // Eigen returns ascending eigenvalues.
  for (std::size_t r = 0; r < k; ++r) {
    const auto col = static_cast<Eigen::Index>(dim - 1 - r);
    p.basis.push_back(detail::canonical_direction(solver.eigenvectors().col(col)));
    p.eigenvalues.push_back(solver.eigenvalues()(col));
  }
  return p;
}

// Fisher LDA: top-k generalised eigenvectors of S_b v = lambda S_w v, with
// S_w regularised by 1e-6 * trace(S_w) / D on the diagonal.
inline Projection fit_lda(const std::vector<StateVector>& points,
                          const std::vector<std::size_t>& labels, std::size_t k) {
  if (points.size() != labels.size()) {
    throw DataError("LDA points and labels differ in length");
  }
  if (points.size() < 2) throw DataError("LDA needs at least 2 points");
  std::map<std::size_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  const std::size_t classes = members.size();
  if (classes < 2) throw DataError("LDA needs labels from at least 2 classes");
  const std::size_t dim = points.front().size();
  if (k < 1 || k > std::min(dim, classes - 1)) {
    throw UsageError("LDA output dimension must be in [1, min(D, L-1) = " +
                     std::to_string(std::min(dim, classes - 1)) + "]");
  }

  const Eigen::MatrixXd x = detail::to_matrix(points);
  const Eigen::VectorXd mean = x.colwise().mean().transpose();
  const auto d = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd within = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd between = Eigen::MatrixXd::Zero(d, d);
  for (const auto& [label, idx] : members) {
    Eigen::VectorXd class_mean = Eigen::VectorXd::Zero(d);
    for (auto i : idx) class_mean += x.row(static_cast<Eigen::Index>(i)).transpose();
    class_mean /= static_cast<double>(idx.size());
    for (auto i : idx) {
      const Eigen::VectorXd c = x.row(static_cast<Eigen::Index>(i)).transpose() - class_mean;
      within += c * c.transpose();
    }
    const Eigen::VectorXd m = class_mean - mean;
    between += static_cast<double>(idx.size()) * m * m.transpose();
  }
  const double eps = 1e-6 * within.trace() / static_cast<double>(dim);
  within.diagonal().array() += eps;
  if (!(eps > 0.0) || Eigen::LLT<Eigen::MatrixXd>(within).info() != Eigen::Success) {
    throw DataError("singular within-class scatter");
  }

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(between, within);
  if (solver.info() != Eigen::Success) {
    throw DataError("singular within-class scatter");
  }
  Projection p;
  p.kind = ProjectionKind::lda;
  p.mean.assign(mean.data(), mean.data() + mean.size());
  for (std::size_t r = 0; r < k; ++r) {
    const auto col = static_cast<Eigen::Index>(dim - 1 - r);
    p.basis.push_back(detail::canonical_direction(solver.eigenvectors().col(col)));
    p.eigenvalues.push_back(std::max(0.0, solver.eigenvalues()(col)));
  }
  return p;
}

inline nlohmann::json to_json(const Projection& p) {
  return {{"kind", to_string(p.kind)},
          {"mean", p.mean},
          {"basis", p.basis},
          {"eigenvalues", p.eigenvalues}};
}

inline Projection projection_from_json(const nlohmann::json& j) {
  Projection p;
  p.kind = parse_projection_kind(j.at("kind").get<std::string>());
  p.mean = j.at("mean").get<StateVector>();
  p.basis = j.at("basis").get<std::vector<StateVector>>();
  p.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
  for (const auto& row : p.basis) {
    if (row.size() != p.mean.size()) throw DataError("projection basis shape mismatch");
  }
  return p;
}

}  // namespace smcov
