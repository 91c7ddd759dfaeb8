// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <boost/random/uniform_int_distribution.hpp>
#include <chrono>
#include <cmath>
#include <exception>
#include <nlohmann/json.hpp>
#include <numeric>
#include <span>
#include <thread>
#include <vector>

#include "sof/criteria.hpp"
#include "sof/dataset.hpp"
#include "sof/error.hpp"
#include "sof/forest.hpp"
#include "sof/node.hpp"
#include "sof/problem.hpp"
#include "sof/rng.hpp"
#include "sof/solve.hpp"
#include "sof/tree.hpp"

namespace sof {

struct CandidateSplit {
  int feature = 0;
  double threshold = 0.0;
  int n_left = 0;
  int n_right = 0;
};

/// Features sampled at a node, ascending. mtry = 0 or >= p keeps every feature.
inline std::vector<int> sample_features(int p, int mtry, Rng& rng) {
  std::vector<int> f(p);
  std::iota(f.begin(), f.end(), 0);
  if (mtry > 0 && mtry < p) {
    for (int k = 0; k < mtry; ++k) {
      boost::random::uniform_int_distribution<int> pick(k, p - 1);
      std::swap(f[k], f[pick(rng)]);
    }
    f.resize(mtry);
    std::sort(f.begin(), f.end());
  }
  return f;
}

/// Node rows sorted by one feature, ties by row id.
inline std::vector<int> sorted_by_feature(const Dataset& ds, std::span<const int> rows, int feature) {
  std::vector<int> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double xa = ds.X(rows[a], feature), xb = ds.X(rows[b], feature);
    return xa < xb || (xa == xb && rows[a] < rows[b]);
  });
  return order;  // positions into rows
}

inline double midpoint(double a, double b) {
  const double m = 0.5 * (a + b);
  return (m >= b || m < a) ? a : m;
}

/// Admissible thresholds for one feature given node positions sorted by that feature.
inline std::vector<CandidateSplit> feature_candidates(const Dataset& ds, std::span<const int> rows,
                                                      const std::vector<int>& order, int feature,
                                                      const FitConfig& cfg, Rng& rng) {
  const int n = static_cast<int>(rows.size());
  const int min_side = cfg.min_side(n);
  std::vector<CandidateSplit> out;
  for (int k = 1; k < n; ++k) {
    const double a = ds.X(rows[order[k - 1]], feature), b = ds.X(rows[order[k]], feature);
    if (!(a < b) || k < min_side || n - k < min_side) continue;
    out.push_back({feature, midpoint(a, b), k, n - k});
  }
  if (cfg.threshold_mode == ThresholdMode::kRandom && static_cast<int>(out.size()) > cfg.n_thresholds) {
    for (int k = 0; k < cfg.n_thresholds; ++k) {
      boost::random::uniform_int_distribution<int> pick(k, static_cast<int>(out.size()) - 1);
      std::swap(out[k], out[pick(rng)]);
    }
    out.resize(cfg.n_thresholds);
    std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.threshold < y.threshold; });
  }
  return out;
}

/// All admissible candidates at a node, ordered by (feature, threshold).
inline std::vector<CandidateSplit> generate_candidate_splits(const Dataset& ds, std::span<const int> rows,
                                                             const FitConfig& cfg, Rng& rng) {
  require(!rows.empty(), ErrorCode::kEmpty, "generate_candidate_splits on empty region");
  std::vector<CandidateSplit> all;
  for (int f : sample_features(ds.p(), cfg.mtry, rng)) {
    auto c = feature_candidates(ds, rows, sorted_by_feature(ds, rows, f), f, cfg, rng);
    all.insert(all.end(), c.begin(), c.end());
  }
  return all;
}

struct ScanResult {
  bool found = false;
  CandidateSplit best;
  SplitScore score;
  long scored = 0;
  long projected = 0;
  long candidate_solves = 0;
};

/// Sweeps each candidate feature in sorted order with running side sums and
/// returns the argmin; ties keep the smallest (feature, threshold).
inline ScanResult scan_splits(const NodeScorer& scorer, const Criterion& crit, const Dataset& ds,
                              std::span<const int> rows, const std::vector<CandidateSplit>& candidates, Rng& rng) {
  ScanResult res;
  const RowMatrix& stats = scorer.row_stats();
  const int n = static_cast<int>(rows.size());
  std::vector<int> sorted_rows(n);
  size_t c = 0;
  while (c < candidates.size()) {
    const int f = candidates[c].feature;
    size_t end = c;
    while (end < candidates.size() && candidates[end].feature == f) ++end;
    const std::vector<int> order = sorted_by_feature(ds, rows, f);
    for (int k = 0; k < n; ++k) sorted_rows[k] = rows[order[k]];
    VectorXd left = VectorXd::Zero(stats.cols());
    int pos = 0;
    for (size_t q = c; q < end; ++q) {
      const CandidateSplit& cand = candidates[q];
      while (pos < n && ds.X(sorted_rows[pos], f) <= cand.threshold) {
        if (stats.cols()) left += stats.row(order[pos]).transpose();
        ++pos;
      }
      const std::span<const int> lrows(sorted_rows.data(), pos), rrows(sorted_rows.data() + pos, n - pos);
      SplitScore s = scorer.score(left, lrows, rrows, rng);
      ++res.scored;
      if (crit.kind == CriterionKind::kOracle) res.candidate_solves += 2;
      if (s.projected) ++res.projected;
      if (s.valid && (!res.found || s.value < res.score.value)) {
        res.found = true;
        res.best = cand;
        res.best.n_left = pos;
        res.best.n_right = n - pos;
        res.score = std::move(s);
      }
    }
    c = end;
  }
  return res;
}

struct TreeLog {
  int tree = 0;
  int depth = 0;
  int n_nodes = 0;
  int n_leaves = 0;
  int degenerate = 0;
  bool root_degenerate = false;
  int regularized = 0;
  long projected = 0;
  long node_solves = 0;
  long candidate_solves = 0;
  long candidates_scored = 0;
  double wall_ms = 0.0;
};

inline nlohmann::json to_json(const TreeLog& l) {
  return {{"tree", l.tree},
          {"depth", l.depth},
          {"n_nodes", l.n_nodes},
          {"n_leaves", l.n_leaves},
          {"degenerate", l.degenerate},
          {"regularized", l.regularized},
          {"projected", l.projected},
          {"node_solves", l.node_solves},
          {"candidate_solves", l.candidate_solves},
          {"candidates_scored", l.candidates_scored},
          {"wall_ms", l.wall_ms}};
}

namespace detail {

class TreeGrower {
 public:
  TreeGrower(const ProblemSpec& spec, const Dataset& ds, const FitConfig& cfg, std::uint64_t seed, int n_sample,
             TreeLog& log)
      : spec_(spec), ds_(ds), cfg_(cfg), seed_(seed), n_(n_sample), log_(log) {}

  Tree grow(std::vector<int> rows) {
    tree_.n_sample = n_;
    build(std::move(rows), 0);
    return std::move(tree_);
  }

 private:
  int make_leaf(int idx) {
    tree_.nodes[idx].leaf = true;
    tree_.nodes[idx].leaf_id = tree_.n_leaves++;
    return idx;
  }

  void build(std::vector<int> rows, int depth) {
    const int idx = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    const int n0 = static_cast<int>(rows.size());
    if ((cfg_.max_depth >= 0 && depth >= cfg_.max_depth) || n0 < 2 * cfg_.min_side(n0)) {
      make_leaf(idx);
      return;
    }
    Rng rng(derive_seed(seed_, static_cast<std::uint64_t>(idx)));
    const Criterion& crit = cfg_.criterion;
    NodeOutcome outcome;
    double parent_value = 0.0;
    if (crit.needs_node_solve()) {
      NodeSolveOptions opt;
      opt.ridge = cfg_.ridge;
      opt.constraint_aware = crit.constraint_aware;
      outcome = node_solve(spec_, ds_, rows, opt);
      ++log_.node_solves;
      if (!outcome.solution) {
        degenerate(idx);
        return;
      }
      parent_value = outcome.solution->value;
      if (outcome.solution->kkt.regularized) ++log_.regularized;
    } else if (crit.kind == CriterionKind::kOracle) {
      SolveResult r = solve_weighted(spec_, ds_, WeightedRows::uniform(rows));
      ++log_.node_solves;
      if (!r.ok()) {
        degenerate(idx);
        return;
      }
      parent_value = r.value;
    }
    NodeScorer scorer(spec_, ds_, crit, &outcome, rows, n_);
    scorer.set_parent_value(parent_value);
    const auto candidates = generate_candidate_splits(ds_, rows, cfg_, rng);
    if (candidates.empty()) {
      make_leaf(idx);
      return;
    }
    ScanResult sr = scan_splits(scorer, crit, ds_, rows, candidates, rng);
    log_.candidates_scored += sr.scored;
    log_.candidate_solves += sr.candidate_solves;
    log_.projected += sr.projected;
    if (!sr.found) {
      make_leaf(idx);
      return;
    }
    const Split split{sr.best.feature, sr.best.threshold};
    std::vector<int> left, right;
    left.reserve(sr.best.n_left);
    right.reserve(sr.best.n_right);
    for (int i : rows) (split.goes_left(ds_.x(i)) ? left : right).push_back(i);
    rows.clear();
    rows.shrink_to_fit();
    TreeNode& nd = tree_.nodes[idx];
    nd.leaf = false;
    nd.split = split;
    nd.stats = {n0, scorer.impurity(), sr.score.value};
    nd.left = static_cast<int>(tree_.nodes.size());
    build(std::move(left), depth + 1);
    tree_.nodes[idx].right = static_cast<int>(tree_.nodes.size());
    build(std::move(right), depth + 1);
  }

  void degenerate(int idx) {
    ++log_.degenerate;
    if (idx == 0) log_.root_degenerate = true;
    make_leaf(idx);
  }

  const ProblemSpec& spec_;
  const Dataset& ds_;
  const FitConfig& cfg_;
  std::uint64_t seed_;
  int n_;
  TreeLog& log_;
  Tree tree_;
};

}  // namespace detail

/// Grows one tree on `tree_rows` (a multiset of dataset rows).
inline Tree fit_tree(const ProblemSpec& spec, const Dataset& ds, std::span<const int> tree_rows,
                     const FitConfig& cfg, std::uint64_t tree_seed, TreeLog* log = nullptr) {
  require(!tree_rows.empty(), ErrorCode::kEmpty, "fit_tree needs at least one row");
  cfg.validate();
  TreeLog local;
  TreeLog& lg = log ? *log : local;
  const auto t0 = std::chrono::steady_clock::now();
  detail::TreeGrower g(spec, ds, cfg, tree_seed, static_cast<int>(tree_rows.size()), lg);
  Tree t = g.grow(std::vector<int>(tree_rows.begin(), tree_rows.end()));
  lg.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  lg.depth = t.depth();
  lg.n_nodes = static_cast<int>(t.nodes.size());
  lg.n_leaves = t.n_leaves;
  return t;
}

struct SubsamplePlan {
  std::vector<int> tree_rows;
  std::vector<int> dec_rows;
};

inline SubsamplePlan subsample(int n, SubsampleMode mode, double rate, Rng& rng) {
  require(n >= 1, ErrorCode::kEmpty, "subsample of empty dataset");
  require(rate > 0.0 && rate <= 1.0, ErrorCode::kRateOutOfRange, "subsample rate must lie in (0, 1]");
  SubsamplePlan plan;
  if (mode == SubsampleMode::kBootstrap) {
    boost::random::uniform_int_distribution<int> pick(0, n - 1);
    plan.tree_rows.resize(n);
    for (int& r : plan.tree_rows) r = pick(rng);
    std::sort(plan.tree_rows.begin(), plan.tree_rows.end());
    plan.dec_rows = plan.tree_rows;
    return plan;
  }
  const int m = std::min(n, static_cast<int>(std::ceil(rate * n - 1e-9)));
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int k = 0; k < m; ++k) {
    boost::random::uniform_int_distribution<int> pick(k, n - 1);
    std::swap(perm[k], perm[pick(rng)]);
  }
  perm.resize(m);
  if (mode == SubsampleMode::kWithoutReplacement) {
    std::sort(perm.begin(), perm.end());
    plan.tree_rows = perm;
    plan.dec_rows = perm;
    return plan;
  }
  require(m >= 2, ErrorCode::kRateOutOfRange, "honest subsampling needs at least two rows");
  const int half = (m + 1) / 2;
  plan.tree_rows.assign(perm.begin(), perm.begin() + half);
  plan.dec_rows.assign(perm.begin() + half, perm.end());
  std::sort(plan.tree_rows.begin(), plan.tree_rows.end());
  std::sort(plan.dec_rows.begin(), plan.dec_rows.end());
  return plan;
}

inline SubsamplePlan subsample(int n, const FitConfig& cfg, Rng& rng) {
  return subsample(n, cfg.subsample_mode, cfg.subsample_rate, rng);
}

/// Fits `cfg.n_trees` trees; tree j uses streams derived from (seed, j), so the
/// result does not depend on `workers`.
inline Forest fit_forest(const ProblemSpec& spec, const Dataset& ds, const FitConfig& cfg, int workers = 1,
                         std::vector<TreeLog>* logs = nullptr) {
  cfg.validate();
  require(spec.outcome_dim() == ds.d(), ErrorCode::kDimensionMismatch,
          "dataset outcome dimension does not match the problem");
  const int T = cfg.n_trees;
  Forest f;
  f.problem_id = spec.id();
  f.problem = spec;
  f.config = cfg;
  f.trees.resize(T);
  f.dec_sets.resize(T);
  f.tree_sets.resize(T);
  std::vector<TreeLog> lg(T);
  std::vector<std::exception_ptr> errors(T);
  std::atomic<int> next{0};
  auto work = [&]() {
    for (int j = next++; j < T; j = next++) {
      try {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(j)));
        SubsamplePlan plan = subsample(ds.n(), cfg, rng);
        const std::uint64_t tree_seed = rng();
        lg[j].tree = j;
        f.trees[j] = fit_tree(spec, ds, plan.tree_rows, cfg, tree_seed, &lg[j]);
        f.tree_sets[j] = std::move(plan.tree_rows);
        f.dec_sets[j] = std::move(plan.dec_rows);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const int w = std::max(1, std::min(workers, T));
  std::vector<std::thread> pool;
  for (int k = 1; k < w; ++k) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  const bool all_degenerate =
      std::all_of(lg.begin(), lg.end(), [](const TreeLog& l) { return l.root_degenerate; });
  require(!all_degenerate, ErrorCode::kInfeasible, "every tree's root problem was degenerate");
  if (logs) *logs = std::move(lg);
  return f;
}

}  // namespace sof
