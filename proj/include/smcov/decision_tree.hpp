#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "smcov/error.hpp"
#include "smcov/features.hpp"
#include "smcov/io.hpp"

namespace smcov {

struct TreeParams {
  std::size_t max_depth = 8;
  std::size_t min_samples_leaf = 5;
  std::uint64_t seed = 0;  // recorded only; induction is deterministic

  bool operator==(const TreeParams&) const = default;
};

struct TreeNode {
  // Leaf when feature < 0.
  int feature = -1;
  double threshold = 0.0;
  std::size_t left = 0;
  std::size_t right = 0;
  std::size_t samples = 0;
  std::size_t errors = 0;
  double gain = 0.0;  // information gain of this node's split, in bits
  std::size_t depth = 0;

  bool is_leaf() const { return feature < 0; }
  double probability() const {
    return samples == 0 ? 0.0 : static_cast<double>(errors) / static_cast<double>(samples);
  }

  bool operator==(const TreeNode&) const = default;
};

// Binary tree over continuous features, grown greedily by information gain.
// nodes[0] is the root.
struct DecisionTree {
  std::vector<TreeNode> nodes;
  TreeParams params;
  std::size_t feature_count = kFeatureCount;
  std::vector<double> importances;

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }
  std::size_t depth() const {
    std::size_t d = 0;
    for (const auto& n : nodes) d = std::max(d, n.depth);
    return d;
  }

  bool operator==(const DecisionTree&) const = default;
};

inline double binary_entropy(std::size_t positives, std::size_t total) {
  if (total == 0 || positives == 0 || positives == total) return 0.0;
  const double p = static_cast<double>(positives) / static_cast<double>(total);
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

namespace detail {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

constexpr double kGainEpsilon = 1e-12;

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<std::vector<double>>& x, const std::vector<bool>& y,
              const TreeParams& params)
      : x_(x), y_(y), params_(params) {}

  DecisionTree build() {
    DecisionTree tree;
    tree.params = params_;
    tree.feature_count = x_.front().size();
    std::vector<std::size_t> all(x_.size());
    std::iota(all.begin(), all.end(), 0);
    grow(tree, all, 0);
    return tree;
  }

 private:
  std::size_t grow(DecisionTree& tree, const std::vector<std::size_t>& idx, std::size_t depth) {
    const std::size_t id = tree.nodes.size();
    tree.nodes.push_back({});
    auto& node = tree.nodes[id];
    node.samples = idx.size();
    node.errors = count_errors(idx);
    node.depth = depth;

    if (depth >= params_.max_depth || idx.size() < 2 * params_.min_samples_leaf ||
        node.errors == 0 || node.errors == node.samples) {
      return id;
    }
    const Split best = best_split(idx, node.errors);
    if (best.feature < 0 || best.gain <= kGainEpsilon) return id;

    std::vector<std::size_t> left, right;
    for (auto i : idx) {
      (x_[i][static_cast<std::size_t>(best.feature)] < best.threshold ? left : right).push_back(i);
    }
    tree.nodes[id].feature = best.feature;
    tree.nodes[id].threshold = best.threshold;
    tree.nodes[id].gain = best.gain;
    const std::size_t l = grow(tree, left, depth + 1);
    const std::size_t r = grow(tree, right, depth + 1);
    tree.nodes[id].left = l;
    tree.nodes[id].right = r;
    return id;
  }

  std::size_t count_errors(const std::vector<std::size_t>& idx) const {
    std::size_t e = 0;
    for (auto i : idx) e += y_[i] ? 1 : 0;
    return e;
  }

  // Highest-gain midpoint split; ties keep the lowest feature, then the
  // lowest threshold. Both children must hold min_samples_leaf rows.
  Split best_split(const std::vector<std::size_t>& idx, std::size_t errors) const {
    const std::size_t n = idx.size();
    const double parent = binary_entropy(errors, n);
    const std::size_t min_leaf = std::max<std::size_t>(1, params_.min_samples_leaf);
    Split best;
    std::vector<std::size_t> order(idx);
    for (std::size_t f = 0; f < x_.front().size(); ++f) {
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x_[a][f] < x_[b][f] || (x_[a][f] == x_[b][f] && a < b);
      });
      std::size_t left_errors = 0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        left_errors += y_[order[k]] ? 1 : 0;
        const double v = x_[order[k]][f];
        const double next = x_[order[k + 1]][f];
        if (v == next) continue;
        const std::size_t nl = k + 1, nr = n - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double children =
            (static_cast<double>(nl) * binary_entropy(left_errors, nl) +
             static_cast<double>(nr) * binary_entropy(errors - left_errors, nr)) /
            static_cast<double>(n);
        const double gain = parent - children;
        if (gain > best.gain + kGainEpsilon) {
          best.feature = static_cast<int>(f);
          best.threshold = v + (next - v) / 2.0;
          best.gain = gain;
        }
      }
    }
    return best;
  }

  const std::vector<std::vector<double>>& x_;
  const std::vector<bool>& y_;
  TreeParams params_;
};

}  // namespace detail

// Normalised sum over splits of (node samples / root samples) * gain.
inline std::vector<double> compute_importances(const DecisionTree& tree) {
  std::vector<double> imp(tree.feature_count, 0.0);
  if (tree.nodes.empty()) return imp;
  const double total = static_cast<double>(tree.nodes[0].samples);
  for (const auto& n : tree.nodes) {
    if (!n.is_leaf()) {
      imp[static_cast<std::size_t>(n.feature)] += static_cast<double>(n.samples) / total * n.gain;
    }
  }
  const double sum = std::accumulate(imp.begin(), imp.end(), 0.0);
  if (sum > 0.0) {
    for (double& v : imp) v /= sum;
  }
  return imp;
}

inline DecisionTree train_tree(const std::vector<std::vector<double>>& x,
                               const std::vector<bool>& y, const TreeParams& params = {}) {
  if (x.size() != y.size()) throw DataError("feature rows and labels differ in length");
  if (x.size() < 2) throw DataError("tree training needs at least 2 rows");
  const auto errors = std::count(y.begin(), y.end(), true);
  if (errors == 0 || static_cast<std::size_t>(errors) == y.size()) {
    throw DataError("tree training needs both error and non-error rows");
  }
  for (const auto& row : x) {
    if (row.size() != x.front().size()) throw DataError("feature rows differ in width");
    for (double v : row) {
      if (!std::isfinite(v)) throw DataError("non-finite feature value");
    }
  }
  DecisionTree tree = detail::TreeBuilder(x, y, params).build();
  tree.importances = compute_importances(tree);
  return tree;
}

inline DecisionTree train_tree(const std::vector<FeatureRow>& rows, const TreeParams& params = {}) {
  std::vector<std::vector<double>> x;
  std::vector<bool> y;
  x.reserve(rows.size());
  for (const auto& r : rows) {
    const auto v = r.values();
    x.emplace_back(v.begin(), v.end());
    y.push_back(r.error);
  }
  return train_tree(x, y, params);
}

inline std::size_t leaf_for(const DecisionTree& tree, std::span<const double> row) {
  std::size_t id = 0;
  while (!tree.nodes[id].is_leaf()) {
    const auto& n = tree.nodes[id];
    id = row[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
  }
  return id;
}

inline double predict_error(const DecisionTree& tree, std::span<const double> row) {
  if (row.size() != tree.feature_count) throw DataError("feature row width mismatch");
  return tree.nodes[leaf_for(tree, row)].probability();
}

inline double predict_error(const DecisionTree& tree, const FeatureRow& row) {
  const auto v = row.values();
  return predict_error(tree, std::span<const double>(v));
}

struct Rule {
  std::size_t feature = 0;
  double threshold = 0.0;
  bool less = true;  // value < threshold when true, value >= threshold otherwise

  bool holds(double value) const { return less ? value < threshold : value >= threshold; }
  std::string describe() const {
    return std::string(feature < kFeatureCount ? kFeatureNames[feature] : "f") +
           (less ? " < " : " >= ") + io::format_double(threshold);
  }
};

// Root-to-leaf rules the row satisfies.
inline std::vector<Rule> explain_prediction(const DecisionTree& tree,
                                            std::span<const double> row) {
  if (row.size() != tree.feature_count) throw DataError("feature row width mismatch");
  std::vector<Rule> path;
  std::size_t id = 0;
  while (!tree.nodes[id].is_leaf()) {
    const auto& n = tree.nodes[id];
    const auto f = static_cast<std::size_t>(n.feature);
    const bool less = row[f] < n.threshold;
    path.push_back({f, n.threshold, less});
    id = less ? n.left : n.right;
  }
  return path;
}

inline std::vector<Rule> explain_prediction(const DecisionTree& tree, const FeatureRow& row) {
  const auto v = row.values();
  return explain_prediction(tree, std::span<const double>(v));
}

// ---- cost-complexity pruning ----

namespace detail {

// Weighted impurity of a node as a leaf: (samples / N) * entropy.
inline double leaf_cost(const DecisionTree& tree, std::size_t id) {
  const auto& n = tree.nodes[id];
  return static_cast<double>(n.samples) / static_cast<double>(tree.nodes[0].samples) *
         binary_entropy(n.errors, n.samples);
}

inline void subtree_cost(const DecisionTree& tree, std::size_t id, double& cost,
                         std::size_t& leaves) {
  const auto& n = tree.nodes[id];
  if (n.is_leaf()) {
    cost += leaf_cost(tree, id);
    ++leaves;
    return;
  }
  subtree_cost(tree, n.left, cost, leaves);
  subtree_cost(tree, n.right, cost, leaves);
}

inline void compact(const DecisionTree& in, std::size_t id, DecisionTree& out) {
  const std::size_t new_id = out.nodes.size();
  out.nodes.push_back(in.nodes[id]);
  if (in.nodes[id].is_leaf()) return;
  const std::size_t l = out.nodes.size();
  compact(in, in.nodes[id].left, out);
  const std::size_t r = out.nodes.size();
  compact(in, in.nodes[id].right, out);
  out.nodes[new_id].left = l;
  out.nodes[new_id].right = r;
}

}  // namespace detail

// Minimal cost-complexity pruning: repeatedly collapses the weakest link
// while its effective alpha is <= alpha.
inline DecisionTree prune(const DecisionTree& tree, double alpha) {
  DecisionTree work = tree;
  while (true) {
    std::optional<std::size_t> weakest;
    double weakest_alpha = std::numeric_limits<double>::infinity();
    for (std::size_t id = 0; id < work.nodes.size(); ++id) {
      if (work.nodes[id].is_leaf()) continue;
      double cost = 0.0;
      std::size_t leaves = 0;
      detail::subtree_cost(work, id, cost, leaves);
      const double g = (detail::leaf_cost(work, id) - cost) / static_cast<double>(leaves - 1);
      if (g < weakest_alpha) {
        weakest_alpha = g;
        weakest = id;
      }
    }
    if (!weakest || weakest_alpha > alpha) break;
    auto& n = work.nodes[*weakest];
    n.feature = -1;
    n.threshold = 0.0;
    n.left = n.right = 0;
    n.gain = 0.0;
  }
  // Drop nodes no longer reachable from the root.
  DecisionTree out;
  out.params = work.params;
  out.feature_count = work.feature_count;
  detail::compact(work, 0, out);
  out.importances = compute_importances(out);
  return out;
}

// ---- serialisation ----

inline nlohmann::json to_json(const DecisionTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : tree.nodes) {
    nlohmann::json j = {{"samples", n.samples}, {"errors", n.errors}, {"depth", n.depth}};
    if (n.is_leaf()) {
      j["probability"] = n.probability();
    } else {
      j["feature"] = n.feature;
      j["threshold"] = n.threshold;
      j["left"] = n.left;
      j["right"] = n.right;
      j["gain"] = n.gain;
    }
    nodes.push_back(std::move(j));
  }
  nlohmann::json importances = nlohmann::json::object();
  for (std::size_t f = 0; f < tree.importances.size(); ++f) {
    importances[f < kFeatureCount ? kFeatureNames[f] : std::to_string(f)] = tree.importances[f];
  }
  return {{"version", 1},
          {"max_depth", tree.params.max_depth},
          {"min_samples_leaf", tree.params.min_samples_leaf},
          {"seed", tree.params.seed},
          {"feature_count", tree.feature_count},
          {"features", kFeatureNames},
          {"importances", importances},
          {"nodes", nodes}};
}

inline DecisionTree tree_from_json(const nlohmann::json& j) {
  DecisionTree tree;
  try {
    tree.params.max_depth = j.at("max_depth").get<std::size_t>();
    tree.params.min_samples_leaf = j.at("min_samples_leaf").get<std::size_t>();
    tree.params.seed = j.value("seed", std::uint64_t{0});
    tree.feature_count = j.at("feature_count").get<std::size_t>();
    for (const auto& n : j.at("nodes")) {
      TreeNode node;
      node.samples = n.at("samples").get<std::size_t>();
      node.errors = n.at("errors").get<std::size_t>();
      node.depth = n.value("depth", std::size_t{0});
      if (n.contains("feature")) {
        node.feature = n.at("feature").get<int>();
        node.threshold = n.at("threshold").get<double>();
        node.left = n.at("left").get<std::size_t>();
        node.right = n.at("right").get<std::size_t>();
        node.gain = n.value("gain", 0.0);
      }
      tree.nodes.push_back(node);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed tree: ") + e.what());
  }
  if (tree.nodes.empty()) throw DataError("tree has no nodes");
  for (const auto& n : tree.nodes) {
    if (!n.is_leaf() && (n.left >= tree.nodes.size() || n.right >= tree.nodes.size() ||
                         static_cast<std::size_t>(n.feature) >= tree.feature_count)) {
      throw DataError("tree node references are out of range");
    }
  }
  tree.importances = compute_importances(tree);
  return tree;
}

}  // namespace smcov
