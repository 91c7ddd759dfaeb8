// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "sof/dataset.hpp"
#include "sof/error.hpp"
#include "sof/forest.hpp"
#include "sof/problem.hpp"
#include "sof/solve.hpp"

namespace sof {

/// Per tree, the decision-set rows (with multiplicity) falling in each leaf.
struct ForestIndex {
  std::vector<std::vector<std::vector<int>>> leaf_rows;  // [tree][leaf] -> rows
};

inline ForestIndex build_index(const Forest& f, const Dataset& ds) {
  ForestIndex idx;
  idx.leaf_rows.resize(f.n_trees());
  for (int j = 0; j < f.n_trees(); ++j) {
    const Tree& t = f.trees[j];
    auto& leaves = idx.leaf_rows[j];
    leaves.resize(t.n_leaves);
    for (int i : f.dec_sets[j]) {
      require(i >= 0 && i < ds.n(), ErrorCode::kData, "forest decision index out of range for dataset");
      leaves[t.leaf_of(ds.x(i))].push_back(i);
    }
  }
  return idx;
}

struct DecisionWeights {
  VectorXd w;
  int contributing_trees = 0;
};

/// Forest weights at x: each tree whose query leaf holds decision rows spreads
/// mass 1/T' uniformly over them, T' being the number of such trees.
inline DecisionWeights forest_weights(const Forest& f, const ForestIndex& idx, const Dataset& ds,
                                      std::span<const double> x) {
  require(static_cast<int>(x.size()) == ds.p(), ErrorCode::kDimensionMismatch, "query has wrong dimension");
  for (double v : x) require(std::isfinite(v), ErrorCode::kNonFinite, "query contains non-finite values");
  DecisionWeights out;
  out.w = VectorXd::Zero(ds.n());
  for (int j = 0; j < f.n_trees(); ++j) {
    const auto& rows = idx.leaf_rows[j][f.trees[j].leaf_of(x)];
    if (rows.empty()) continue;
    const double share = 1.0 / static_cast<double>(rows.size());
    for (int i : rows) out.w[i] += share;
    ++out.contributing_trees;
  }
  require(out.contributing_trees > 0, ErrorCode::kNoNeighbors, "no tree has decision rows in the query leaf");
  out.w /= static_cast<double>(out.contributing_trees);
  return out;
}

inline DecisionWeights forest_weights(const Forest& f, const Dataset& ds, std::span<const double> x) {
  return forest_weights(f, build_index(f, ds), ds, x);
}

struct Decision {
  VectorXd z;
  double value = 0.0;
  bool feasible = true;  // false: stochastic constraints dropped after the estimate was infeasible
  DecisionWeights weights;
};

/// Solves the weighted problem for given weights. When the estimated stochastic
/// constraints are infeasible, returns the relaxed solution flagged infeasible.
inline Decision decide_with_weights(const ProblemSpec& spec, const Dataset& ds, DecisionWeights weights) {
  Decision d;
  const WeightedRows s = WeightedRows::from_dense(std::span<const double>(weights.w.data(), weights.w.size()));
  SolveResult r = solve_weighted(spec, ds, s);
  if (!r.ok() && !spec.constraints().stochastic.empty()) {
    d.feasible = false;
    r = solve_weighted(spec, ds, s, true);
  }
  require(r.ok(), ErrorCode::kInfeasible, std::string("weighted problem is ") + to_string(r.status));
  d.z = r.z;
  d.value = r.value;
  d.weights = std::move(weights);
  return d;
}

inline Decision decide(const Forest& f, const ForestIndex& idx, const ProblemSpec& spec, const Dataset& ds,
                       std::span<const double> x) {
  return decide_with_weights(spec, ds, forest_weights(f, idx, ds, x));
}

/// Uniform weight 1/k on the k nearest rows (Euclidean); distance ties by row index.
inline DecisionWeights knn_weights(const Dataset& ds, std::span<const double> x, int k) {
  require(k >= 1 && k <= ds.n(), ErrorCode::kKOutOfRange, "k must lie in [1, n]");
  require(static_cast<int>(x.size()) == ds.p(), ErrorCode::kDimensionMismatch, "query has wrong dimension");
  const Eigen::Map<const VectorXd> q(x.data(), ds.p());
  std::vector<double> dist(ds.n());
  for (int i = 0; i < ds.n(); ++i) dist[i] = (ds.X.row(i).transpose() - q).squaredNorm();
  std::vector<int> order(ds.n());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](int a, int b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
  DecisionWeights out;
  out.w = VectorXd::Zero(ds.n());
  for (int r = 0; r < k; ++r) out.w[order[r]] = 1.0 / k;
  out.contributing_trees = 0;
  return out;
}

}  // namespace sof
