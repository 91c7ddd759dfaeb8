// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sof/harness/scenarios.hpp"
#include "testing.hpp"

namespace sof {
namespace {

using testing::from_rows;
using testing::iota_rows;

Forest forest_of(std::vector<Tree> trees, CriterionKind kind) {
  Forest f;
  f.problem = SquaredError{};
  f.config.criterion.kind = kind;
  f.dec_sets.resize(trees.size());
  f.tree_sets.resize(trees.size());
  f.trees = std::move(trees);
  return f;
}

Tree stump(int feature, NodeStats stats, int n_sample) {
  Tree t;
  TreeNode root, a, b;
  root.leaf = false;
  root.split = {feature, 0.0};
  root.left = 1;
  root.right = 2;
  root.stats = stats;
  a.leaf_id = 0;
  b.leaf_id = 1;
  t.nodes = {root, a, b};
  t.n_leaves = 2;
  t.n_sample = n_sample;
  return t;
}

FitConfig config(const std::string& crit, int trees) {
  FitConfig c;
  c.criterion = parse_criterion(crit);
  c.n_trees = trees;
  c.min_leaf = 5;
  c.seed = 21;
  return c;
}

// ---------------------------------------------------------------- impurity decrease

TEST(ImpurityDecrease, CriterionFormulas) {
  const NodeStats s{50, 2.0, -0.3};
  EXPECT_NEAR(impurity_decrease(CriterionKind::kApxRisk, s, 100), 0.6, 1e-15);
  EXPECT_NEAR(impurity_decrease(CriterionKind::kApxSoln, s, 100), 2.6, 1e-15);
  EXPECT_EQ(impurity_decrease(CriterionKind::kOracle, s, 100), impurity_decrease(CriterionKind::kApxSoln, s, 100));
  EXPECT_EQ(impurity_decrease(CriterionKind::kApxRisk, NodeStats{10, 5.0, 0.0}, 10), 0.0);
  EXPECT_EQ(impurity_decrease(CriterionKind::kRandom, s, 100), 0.0);
}

// Parent half-variance 13, weighted child half-variances 0.5, from direct sums.
TEST(ImpurityDecrease, SquaredErrorFixture) {
  const Dataset ds = from_rows({{0}, {1}, {2}, {3}}, {{0}, {2}, {10}, {12}});
  const std::vector<double> y = {0, 2, 10, 12};
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / 4.0;
  double parent = 0.0;
  for (double v : y) parent += 0.5 * (v - mean) * (v - mean) / 4.0;
  const double children = (0.5 * (1.0 + 1.0) + 0.5 * (1.0 + 1.0)) / 4.0;
  EXPECT_NEAR(parent - children, 12.5, 1e-12);
  for (const char* crit : {"apx-soln", "variance", "oracle"}) {
    FitConfig cfg = config(crit, 1);
    cfg.min_leaf = 2;
    cfg.subsample_mode = SubsampleMode::kWithoutReplacement;
    const Tree t = fit_tree(SquaredError{}, ds, iota_rows(4), cfg, 1);
    ASSERT_FALSE(t.nodes[0].leaf) << crit;
    EXPECT_EQ(t.nodes[0].split.threshold, 1.5) << crit;
    EXPECT_NEAR(t.nodes[0].stats.impurity, parent, 1e-12) << crit;
    EXPECT_NEAR(impurity_decrease(cfg.criterion.kind, t.nodes[0].stats, 4), parent - children, 1e-12) << crit;
  }
}

// ---------------------------------------------------------------- reports

TEST(Importance, SingleSplitOnFeatureThree) {
  const Forest f = forest_of({stump(3, {20, 1.0, 0.4}, 20)}, CriterionKind::kApxSoln);
  const ImportanceReport r = importance_report(f, 5);
  for (int j = 0; j < 5; ++j) {
    EXPECT_EQ(r.mdi[j], j == 3 ? 1.0 : 0.0);
    EXPECT_EQ(r.split_frequency[j], j == 3 ? 1.0 : 0.0);
  }
}

TEST(Importance, NegativeDecreasesAreKept) {
  // Feature 0: decrease 1 - 1.5 = -0.5; feature 1: decrease 1 - 0.5 = 0.5.
  const Forest f = forest_of({stump(0, {10, 1.0, 1.5}, 10), stump(1, {10, 1.0, 0.5}, 10)}, CriterionKind::kApxSoln);
  const auto mdi = mdi_importance(f, 2);
  EXPECT_NEAR(mdi[0], -1.0, 1e-15);
  EXPECT_EQ(mdi[1], 1.0);
}

TEST(Importance, NoSplitsIsAnError) {
  const Forest f = forest_of({single_leaf_tree(5), single_leaf_tree(5)}, CriterionKind::kApxRisk);
  for (auto call : {+[](const Forest& g) { mdi_importance(g, 3); }, +[](const Forest& g) { split_frequency(g, 3); }}) {
    try {
      call(f);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kNoSplits);
    }
  }
}

TEST(Importance, NormalizationOnFittedForests) {
  const auto sc = harness::make_scenario("newsvendor-trunc", {{"p", 5}});
  const Dataset ds = harness::simulate(sc, 300, 4);
  for (const char* crit : {"apx-risk", "apx-soln", "variance"}) {
    const Forest f = fit_forest(sc.problem, ds, config(crit, 5));
    const ImportanceReport r = importance_report(f, 5);
    EXPECT_EQ(*std::max_element(r.mdi.begin(), r.mdi.end()), 1.0) << crit;
    EXPECT_NEAR(std::accumulate(r.split_frequency.begin(), r.split_frequency.end(), 0.0), 1.0, 1e-12) << crit;
  }
}

TEST(Importance, InvariantToCriterionScale) {
  const auto sc = harness::make_scenario("newsvendor-trunc", {{"p", 4}});
  const Dataset ds = harness::simulate(sc, 250, 5);
  for (const char* crit : {"apx-risk", "apx-soln", "variance"}) {
    FitConfig a = config(crit, 4), b = a;
    b.criterion.scale = 2.0;
    const Forest fa = fit_forest(sc.problem, ds, a), fb = fit_forest(sc.problem, ds, b);
    const ImportanceReport ra = importance_report(fa, 4), rb = importance_report(fb, 4);
    EXPECT_EQ(ra.split_frequency, rb.split_frequency) << crit;
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(ra.mdi[j], rb.mdi[j], 1e-12) << crit;
    EXPECT_NEAR(fb.trees[0].nodes[0].stats.impurity, 2.0 * fa.trees[0].nodes[0].stats.impurity, 1e-12) << crit;
  }
}

TEST(Importance, InvariantToRowPermutation) {
  const auto sc = harness::make_scenario("newsvendor-trunc", {{"p", 4}});
  const Dataset ds = harness::simulate(sc, 200, 6);
  std::vector<int> perm = iota_rows(ds.n());
  std::reverse(perm.begin(), perm.end());
  std::rotate(perm.begin(), perm.begin() + 37, perm.end());
  RowMatrix X(ds.n(), ds.p()), Y(ds.n(), ds.d());
  for (int i = 0; i < ds.n(); ++i) {
    X.row(i) = ds.X.row(perm[i]);
    Y.row(i) = ds.Y.row(perm[i]);
  }
  const Dataset shuffled = make_dataset(X, Y);
  for (const char* crit : {"apx-risk", "variance"}) {
    FitConfig cfg = config(crit, 2);
    cfg.subsample_mode = SubsampleMode::kWithoutReplacement;
    const ImportanceReport a = importance_report(fit_forest(sc.problem, ds, cfg), 4);
    const ImportanceReport b = importance_report(fit_forest(sc.problem, shuffled, cfg), 4);
    EXPECT_EQ(a.split_frequency, b.split_frequency) << crit;
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(a.mdi[j], b.mdi[j], 1e-9) << crit;
  }
}

TEST(SplitFrequency, RandomCriterionIsUniform) {
  const int p = 4;
  const auto sc = harness::make_scenario("newsvendor-trunc", {{"p", p}});
  const Dataset ds = harness::simulate(sc, 200, 7);
  const Forest f = fit_forest(sc.problem, ds, config("random", 100));
  long splits = 0;
  for (const auto& t : f.trees) splits += t.n_internal();
  const auto freq = split_frequency(f, p);
  const double sd = std::sqrt(splits * (1.0 / p) * (1.0 - 1.0 / p));
  for (int j = 0; j < p; ++j) EXPECT_LE(std::abs(freq[j] * splits - splits / static_cast<double>(p)), 3.0 * sd);
  const auto mdi = mdi_importance(f, p);
  for (double v : mdi) EXPECT_EQ(v, 0.0);
}

}  // namespace
}  // namespace sof
