// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <vector>

#include "sof/criteria.hpp"
#include "sof/error.hpp"
#include "sof/forest.hpp"

namespace sof {

/// Impurity decrease of one split. `n` is the tree sample size; p_t = n_node / n.
inline double impurity_decrease(CriterionKind kind, const NodeStats& s, int n) {
  const double p_t = static_cast<double>(s.n_node) / n;
  switch (kind) {
    case CriterionKind::kApxRisk: return -s.score / p_t;
    case CriterionKind::kRandom: return 0.0;
    default: return s.impurity - s.score / p_t;
  }
}

struct ImportanceReport {
  std::vector<double> mdi;
  std::vector<double> split_frequency;
};

/// Share of internal nodes splitting on each feature.
inline std::vector<double> split_frequency(const Forest& f, int p) {
  std::vector<double> freq(p, 0.0);
  long total = 0;
  for (const Tree& t : f.trees)
    for (const TreeNode& nd : t.nodes)
      if (!nd.leaf) {
        require(nd.split.feature < p, ErrorCode::kDimensionMismatch, "split feature exceeds p");
        freq[nd.split.feature] += 1.0;
        ++total;
      }
  require(total > 0, ErrorCode::kNoSplits, "forest has no splits");
  for (double& v : freq) v /= static_cast<double>(total);
  return freq;
}

/// Mean decrease in impurity, divided by the largest positive entry (negatives kept).
inline std::vector<double> mdi_importance(const Forest& f, int p) {
  std::vector<double> mdi(p, 0.0);
  long splits = 0;
  for (const Tree& t : f.trees) {
    for (const TreeNode& nd : t.nodes) {
      if (nd.leaf) continue;
      require(nd.split.feature < p, ErrorCode::kDimensionMismatch, "split feature exceeds p");
      const double p_t = static_cast<double>(nd.stats.n_node) / t.n_sample;
      mdi[nd.split.feature] += p_t * impurity_decrease(f.config.criterion.kind, nd.stats, t.n_sample);
      ++splits;
    }
  }
  require(splits > 0, ErrorCode::kNoSplits, "forest has no splits");
  for (double& v : mdi) v /= f.n_trees();
  const double top = *std::max_element(mdi.begin(), mdi.end());
  if (top > 0.0)
    for (double& v : mdi) v /= top;
  return mdi;
}

inline ImportanceReport importance_report(const Forest& f, int p) { return {mdi_importance(f, p), split_frequency(f, p)}; }

}  // namespace sof
