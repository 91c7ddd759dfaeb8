// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "sof/harness/scenarios.hpp"
#include "testing.hpp"

namespace sof {
namespace {

TEST(MakeDataset, SingleRow) {
  RowMatrix X(1, 1), Y(1, 1);
  X << 0.5;
  Y << 3.0;
  Dataset ds = make_dataset(X, Y);
  EXPECT_EQ(ds.n(), 1);
  EXPECT_EQ(ds.p(), 1);
  EXPECT_EQ(ds.d(), 1);
}

TEST(MakeDataset, NaNRejected) {
  RowMatrix X(2, 1), Y(2, 1);
  X << 0.5, std::numeric_limits<double>::quiet_NaN();
  Y << 1.0, 2.0;
  try {
    make_dataset(X, Y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFinite);
  }
}

TEST(MakeDataset, RowCountMismatch) {
  EXPECT_THROW(make_dataset(RowMatrix::Zero(2, 1), RowMatrix::Zero(3, 1)), Error);
}

TEST(MakeDataset, NewsvendorCsvFixture) {
  const auto sc = harness::make_scenario("newsvendor-trunc");
  const Dataset sim = harness::simulate(sc, 4, 17);
  const auto path = std::filesystem::temp_directory_path() / "sof_core_fixture.csv";
  write_csv(sim, path.string());
  const Dataset ds = read_csv(path.string());
  EXPECT_EQ(ds.n(), 4);
  EXPECT_EQ(ds.p(), 10);
  EXPECT_EQ(ds.d(), 2);
  EXPECT_EQ(ds.X, sim.X);
  EXPECT_EQ(ds.Y, sim.Y);
  std::filesystem::remove(path);
}

TEST(ReadCsv, BadValueIsDataError) {
  const auto path = std::filesystem::temp_directory_path() / "sof_bad.csv";
  {
    std::ofstream out(path);
    out << "x_1,y_1\n1.0,abc\n";
  }
  try {
    read_csv(path.string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kData);
  }
  std::filesystem::remove(path);
}

// Root x_1 <= 4; left child x_2 <= 6 with leaves 0, 1; right leaf 2.
Tree example_tree() {
  Tree t;
  t.nodes.resize(5);
  t.nodes[0] = {false, {0, 4.0}, 1, 4, -1, {}};
  t.nodes[1] = {false, {1, 6.0}, 2, 3, -1, {}};
  t.nodes[2] = {true, {}, -1, -1, 0, {}};
  t.nodes[3] = {true, {}, -1, -1, 1, {}};
  t.nodes[4] = {true, {}, -1, -1, 2, {}};
  t.n_leaves = 3;
  t.n_sample = 10;
  return t;
}

TEST(LeafOf, SingleLeafTree) {
  const Tree t = single_leaf_tree(5);
  const double x[3] = {1e9, -3.0, 0.0};
  EXPECT_EQ(t.leaf_of(x), 0);
}

TEST(LeafOf, ThresholdGoesLeft) {
  const Tree t = example_tree();
  const double x[2] = {4.0, 100.0};
  EXPECT_NE(t.leaf_of(x), 2);
  EXPECT_EQ(t.leaf_of(x), 1);
}

TEST(LeafOf, DepthTwoExample) {
  const Tree t = example_tree();
  const double x[2] = {5.0, 1.0};
  EXPECT_EQ(t.leaf_of(x), 2);
  const double x2[2] = {3.0, 6.0};
  EXPECT_EQ(t.leaf_of(x2), 0);
}

TEST(TreeProperty, PartitionAndRoundTrip) {
  const Dataset ds = testing::gaussian_dataset(300, 4, 1, 8);
  FitConfig cfg;
  cfg.criterion = parse_criterion("variance");
  cfg.min_leaf = 5;
  const Tree t = fit_tree(SquaredError{1}, ds, testing::iota_rows(ds.n()), cfg, 3);
  ASSERT_GT(t.n_leaves, 4);
  const Tree back = tree_from_json(nlohmann::json::parse(to_json(t).dump()));
  Rng rng(99);
  std::vector<int> hits(t.n_leaves, 0);
  for (int q = 0; q < 1000; ++q) {
    double x[4];
    for (double& v : x) v = 2.0 * testing::normal(rng);
    const int leaf = t.leaf_of(x);
    ASSERT_GE(leaf, 0);
    ASSERT_LT(leaf, t.n_leaves);
    EXPECT_EQ(back.leaf_of(x), leaf);
    // Exactly one leaf region contains x: count leaves reachable under the routing predicate.
    int reached = 0;
    std::vector<int> stack{0};
    while (!stack.empty()) {
      const int k = stack.back();
      stack.pop_back();
      const TreeNode& nd = t.nodes[k];
      if (nd.leaf) {
        ++reached;
        EXPECT_EQ(nd.leaf_id, leaf);
        continue;
      }
      stack.push_back(nd.split.goes_left(x) ? nd.left : nd.right);
    }
    EXPECT_EQ(reached, 1);
  }
}

TEST(TreeProperty, SiblingDisjointness) {
  const Dataset ds = testing::gaussian_dataset(200, 3, 1, 9);
  FitConfig cfg;
  cfg.criterion = parse_criterion("variance");
  cfg.min_leaf = 5;
  const Tree t = fit_tree(SquaredError{1}, ds, testing::iota_rows(ds.n()), cfg, 4);
  // Route every row from the root; each internal node's rows split into disjoint children.
  std::vector<std::vector<int>> at(t.nodes.size());
  at[0] = testing::iota_rows(ds.n());
  for (size_t k = 0; k < t.nodes.size(); ++k) {
    const TreeNode& nd = t.nodes[k];
    if (nd.leaf) continue;
    for (int i : at[k]) {
      const bool l = nd.split.goes_left(ds.x(i));
      at[l ? nd.left : nd.right].push_back(i);
    }
    EXPECT_EQ(at[nd.left].size() + at[nd.right].size(), at[k].size());
  }
  int total = 0;
  for (size_t k = 0; k < t.nodes.size(); ++k)
    if (t.nodes[k].leaf) total += static_cast<int>(at[k].size());
  EXPECT_EQ(total, ds.n());
}

}  // namespace
}  // namespace sof
