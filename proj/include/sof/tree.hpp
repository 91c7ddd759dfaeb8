// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "sof/error.hpp"

namespace sof {

struct Split {
  int feature = 0;
  double threshold = 0.0;

  /// Ties route left.
  bool goes_left(std::span<const double> x) const { return x[feature] <= threshold; }
};

/// Fit-time statistics kept on internal nodes for importance accounting.
struct NodeStats {
  int n_node = 0;
  double impurity = 0.0;  // node objective value v0 (criterion-specific)
  double score = 0.0;     // winning split's criterion value
};

struct TreeNode {
  bool leaf = true;
  Split split;
  int left = -1;
  int right = -1;
  int leaf_id = -1;
  NodeStats stats;
};

/// Binary axis-aligned partition. Nodes and leaf ids are numbered in pre-order;
/// node 0 is the root.
struct Tree {
  std::vector<TreeNode> nodes;
  int n_leaves = 0;
  int n_sample = 0;  // size of the tree's structure sample

  int leaf_of(std::span<const double> x) const {
    int k = 0;
    while (!nodes[k].leaf) k = nodes[k].split.goes_left(x) ? nodes[k].left : nodes[k].right;
    return nodes[k].leaf_id;
  }
  int n_internal() const { return static_cast<int>(nodes.size()) - n_leaves; }
  int depth() const { return depth_from(0); }

 private:
  int depth_from(int k) const {
    if (nodes[k].leaf) return 0;
    return 1 + std::max(depth_from(nodes[k].left), depth_from(nodes[k].right));
  }
};

inline Tree single_leaf_tree(int n_sample) {
  Tree t;
  TreeNode leaf;
  leaf.leaf_id = 0;
  t.nodes.push_back(leaf);
  t.n_leaves = 1;
  t.n_sample = n_sample;
  return t;
}

inline nlohmann::json to_json(const Tree& t) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const TreeNode& nd : t.nodes) {
    if (nd.leaf) {
      nodes.push_back({{"kind", "leaf"}, {"leaf_id", nd.leaf_id}});
    } else {
      nodes.push_back({{"kind", "internal"},
                       {"feature", nd.split.feature},
                       {"threshold", nd.split.threshold},
                       {"left", nd.left},
                       {"right", nd.right},
                       {"stats",
                        {{"n_node", nd.stats.n_node}, {"impurity", nd.stats.impurity}, {"score", nd.stats.score}}}});
    }
  }
  return {{"n_sample", t.n_sample}, {"nodes", nodes}};
}

inline Tree tree_from_json(const nlohmann::json& j) {
  Tree t;
  t.n_sample = j.value("n_sample", 0);
  const auto& nodes = j.at("nodes");
  require(nodes.is_array() && !nodes.empty(), ErrorCode::kData, "tree has no nodes");
  const int count = static_cast<int>(nodes.size());
  for (const auto& nj : nodes) {
    TreeNode nd;
    const std::string kind = nj.at("kind").get<std::string>();
    if (kind == "leaf") {
      nd.leaf_id = nj.at("leaf_id").get<int>();
      ++t.n_leaves;
    } else {
      require(kind == "internal", ErrorCode::kData, "unknown node kind '" + kind + "'");
      nd.leaf = false;
      nd.split.feature = nj.at("feature").get<int>();
      nd.split.threshold = nj.at("threshold").get<double>();
      nd.left = nj.at("left").get<int>();
      nd.right = nj.at("right").get<int>();
      require(nd.left > 0 && nd.left < count && nd.right > 0 && nd.right < count && nd.split.feature >= 0,
              ErrorCode::kData, "malformed internal node");
      if (nj.contains("stats")) {
        const auto& s = nj.at("stats");
        nd.stats.n_node = s.value("n_node", 0);
        nd.stats.impurity = s.value("impurity", 0.0);
        nd.stats.score = s.value("score", 0.0);
      }
    }
    t.nodes.push_back(nd);
  }
  return t;
}

}  // namespace sof
