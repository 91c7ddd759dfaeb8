// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sof/harness/scenarios.hpp"
#include "testing.hpp"

namespace sof {
namespace {

using testing::from_rows;
using testing::iota_rows;
using testing::normal;
using testing::uniform;
using testing::weighted_objective;

std::span<const double> span_of(const std::vector<double>& v) { return {v.data(), v.size()}; }

Newsvendor newsvendor(std::vector<double> a, std::vector<double> b) {
  Newsvendor nv;
  nv.alpha = Eigen::Map<VectorXd>(a.data(), a.size());
  nv.beta = Eigen::Map<VectorXd>(b.data(), b.size());
  return nv;
}

Dataset outcomes_only(const RowMatrix& Y) { return make_dataset(RowMatrix::Zero(Y.rows(), 1), Y); }

// Independent weighted quantile: smallest sorted value whose cumulative weight reaches alpha.
double sorted_weighted_quantile(std::vector<double> v, std::vector<double> w, double alpha) {
  std::vector<int> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return v[a] < v[b]; });
  double total = std::accumulate(w.begin(), w.end(), 0.0), acc = 0.0;
  for (int k : order) {
    acc += w[k] / total;
    if (acc >= alpha - 1e-12) return v[k];
  }
  return v[order.back()];
}

// ---------------------------------------------------------------- cost

TEST(Cost, NewsvendorBackorder) {
  const ProblemSpec spec = newsvendor({1.0}, {1.0});
  const std::vector<double> y = {3.0};
  EXPECT_DOUBLE_EQ(spec.cost(VectorXd::Constant(1, 2.0), span_of(y)), 1.0);
}

TEST(Cost, SquaredErrorAtOutcomeIsZero) {
  const ProblemSpec spec = SquaredError{3};
  const std::vector<double> y = {1.5, -2.0, 0.25};
  EXPECT_EQ(spec.cost(Eigen::Map<const VectorXd>(y.data(), 3), span_of(y)), 0.0);
}

TEST(Cost, CvarHandSubstitution) {
  CVaRPortfolio cp;
  cp.d = 1;
  cp.level = 0.5;
  const ProblemSpec spec = cp;
  const std::vector<double> y = {0.0};
  EXPECT_DOUBLE_EQ(spec.cost((VectorXd(2) << 1.0, 0.5).finished(), span_of(y)), 0.5);
}

TEST(Cost, CvarMeanWeightTerm) {
  CVaRPortfolio cp;
  cp.d = 2;
  cp.level = 0.25;
  cp.mean_weight = 0.5;
  const ProblemSpec spec = cp;
  const std::vector<double> y = {1.0, 3.0};
  const VectorXd z = (VectorXd(3) << 0.5, 0.5, 4.0).finished();
  // r = 2; (1/0.25) max(4 - 2, 0) - 4 - 0.5 * 2.
  EXPECT_DOUBLE_EQ(spec.cost(z, span_of(y)), 8.0 - 4.0 - 1.0);
}

TEST(Cost, DimensionMismatchThrows) {
  const ProblemSpec spec = SquaredError{2};
  const std::vector<double> y = {1.0};
  try {
    spec.cost(VectorXd::Zero(2), span_of(y));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(ProblemSpec, RejectsInvalidParameters) {
  EXPECT_THROW(ProblemSpec(newsvendor({1.0}, {0.0})), Error);
  CVaRPortfolio cp;
  cp.level = 1.0;
  EXPECT_THROW(ProblemSpec{cp}, Error);
  CVaRShortestPath sp;
  sp.node_count = 3;
  sp.edges = {{0, 1}};
  sp.source = 0;
  sp.sink = 2;
  EXPECT_THROW(ProblemSpec{sp}, Error);
}

TEST(ProblemSpec, JsonRoundTrip) {
  std::vector<ProblemSpec> specs;
  specs.push_back(SquaredError{2});
  Newsvendor nv = newsvendor({5.0, 0.05}, {100.0, 1.0});
  nv.capacity = 7.0;
  nv.service_level = 0.5;
  specs.push_back(nv);
  VariancePortfolio vp;
  vp.d = 3;
  vp.allow_short = true;
  vp.return_floor = 0.1;
  specs.push_back(vp);
  CVaRPortfolio cp;
  cp.d = 3;
  cp.mean_weight = 0.3;
  specs.push_back(cp);
  specs.push_back(harness::shortest_path_grid().problem);
  for (const auto& s : specs) {
    const nlohmann::json j = to_json(s);
    EXPECT_EQ(to_json(problem_from_json(j)), j) << j.dump();
  }
}

// ---------------------------------------------------------------- solve_weighted

TEST(SolveWeighted, NewsvendorIsWeightedCriticalQuantile) {
  Rng rng(11);
  const int n = 57;
  RowMatrix Y(n, 2);
  std::vector<double> w(n), y1(n), y2(n);
  for (int i = 0; i < n; ++i) {
    Y(i, 0) = y1[i] = uniform(rng, 0, 10);
    Y(i, 1) = y2[i] = uniform(rng, 0, 10);
    w[i] = uniform(rng, 0.1, 1.0);
  }
  const Dataset ds = outcomes_only(Y);
  const ProblemSpec spec = newsvendor({5.0, 0.05}, {100.0, 1.0});
  const SolveResult r = solve_weighted(spec, ds, span_of(w));
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.z[0], sorted_weighted_quantile(y1, w, 100.0 / 105.0));
  EXPECT_EQ(r.z[1], sorted_weighted_quantile(y2, w, 1.0 / 1.05));
}

TEST(SolveWeighted, ZeroVarianceAssetTakesAllWeight) {
  Rng rng(12);
  const int n = 40;
  RowMatrix Y(n, 3);
  for (int i = 0; i < n; ++i) Y.row(i) << 0.7, 1.0 + normal(rng), -0.5 + 2.0 * normal(rng);
  VariancePortfolio vp;
  vp.d = 3;
  const SolveResult r = solve_weighted(vp, outcomes_only(Y), WeightedRows::uniform(iota_rows(n)));
  ASSERT_TRUE(r.ok());
  EXPECT_NEAR(r.z[0], 1.0, 1e-8);
  EXPECT_NEAR(r.z[1], 0.0, 1e-8);
  EXPECT_NEAR(r.z[2], 0.0, 1e-8);
  EXPECT_NEAR(r.value, 0.0, 1e-10);
}

TEST(SolveWeighted, CvarSingleAsset) {
  RowMatrix Y(4, 1);
  Y << -2.0, -1.0, 1.0, 2.0;
  CVaRPortfolio cp;
  cp.d = 1;
  cp.level = 0.5;
  const SolveResult r = solve_weighted(cp, outcomes_only(Y), WeightedRows::uniform(iota_rows(4)));
  ASSERT_TRUE(r.ok());
  // Oracle: the objective is piecewise linear in w with kinks at the sample points.
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 4; ++k) {
    double v = 0.0;
    for (int i = 0; i < 4; ++i) v += std::max(Y(k, 0) - Y(i, 0), 0.0) / 0.5 / 4.0;
    best = std::min(best, v - Y(k, 0));
  }
  EXPECT_NEAR(best, 1.5, 1e-15);
  EXPECT_NEAR(r.value, 1.5, 1e-10);
}

TEST(SolveWeighted, InfeasibleServiceLevelReportsStatus) {
  RowMatrix Y(3, 1);
  Y << 10.0, 12.0, 14.0;
  Newsvendor nv = newsvendor({1.0}, {1.0});
  nv.capacity = 1.0;
  nv.service_level = 0.5;
  const SolveResult r = solve_weighted(nv, outcomes_only(Y), WeightedRows::uniform(iota_rows(3)));
  EXPECT_EQ(r.status, LPStatus::kInfeasible);
}

// Random feasible points for the perturbation property.
VectorXd random_feasible(const ProblemSpec& spec, Rng& rng) {
  const int dz = spec.decision_dim();
  VectorXd z = VectorXd::Zero(dz);
  if (auto* p = spec.as<Newsvendor>()) {
    const int d = static_cast<int>(p->alpha.size());
    const VectorXd s = testing::random_simplex_point(d + 1, rng) * (p->capacity ? *p->capacity : 10.0);
    return s.head(d);
  }
  if (auto* p = spec.as<CVaRShortestPath>()) {
    // Convex combination of random monotone grid paths.
    const int k = static_cast<int>(std::lround(std::sqrt(p->node_count)));
    const VectorXd mix = testing::random_simplex_point(3, rng);
    for (int m = 0; m < 3; ++m) {
      int r = 0, c = 0;
      while (r < k - 1 || c < k - 1) {
        const bool right = r == k - 1 || (c < k - 1 && uniform(rng) < 0.5);
        const int u = r * k + c, v = right ? u + 1 : u + k;
        for (size_t e = 0; e < p->edges.size(); ++e)
          if (p->edges[e] == std::make_pair(u, v)) z[e] += mix[m];
        right ? ++c : ++r;
      }
    }
    z[dz - 1] = 5.0 * normal(rng);
    return z;
  }
  const int d = spec.outcome_dim();
  z.head(d) = testing::random_simplex_point(d, rng);
  z[d] = 2.0 * normal(rng);
  return z;
}

TEST(SolveWeighted, OptimalUnderFeasiblePerturbation) {
  Rng rng(13);
  Newsvendor cap = newsvendor({1.0, 2.0}, {3.0, 1.0});
  cap.capacity = 4.0;
  std::vector<std::pair<ProblemSpec, Dataset>> cases;
  for (const auto& id : {"cvar-lognormal", "minvar-gaussian", "shortest-path-grid"}) {
    const auto sc = harness::make_scenario(id);
    cases.emplace_back(sc.problem, harness::simulate(sc, 120, 5));
  }
  {
    const auto sc = harness::make_scenario("newsvendor-trunc");
    cases.emplace_back(cap, harness::simulate(sc, 120, 5));
  }
  for (const auto& [spec, ds] : cases) {
    std::vector<double> w(ds.n());
    for (double& v : w) v = uniform(rng, 0.0, 1.0);
    const WeightedRows s = WeightedRows::from_dense(span_of(w));
    const SolveResult r = solve_weighted(spec, ds, s);
    ASSERT_TRUE(r.ok()) << spec.id();
    const double base = weighted_objective(spec, r.z, ds, s);
    EXPECT_NEAR(base, r.value, 1e-9 * (1.0 + std::abs(base)));
    for (int t = 0; t < 100; ++t) {
      const VectorXd dir = random_feasible(spec, rng) - r.z;
      if (dir.norm() < 1e-3) continue;
      const VectorXd z = r.z + 1e-3 * dir / dir.norm();
      EXPECT_GE(weighted_objective(spec, z, ds, s), base - 1e-8) << spec.id();
    }
  }
}

// ---------------------------------------------------------------- node_solve

TEST(NodeSolve, SquaredErrorRegion) {
  const Dataset ds = from_rows({{0}, {0}, {0}}, {{0.0}, {5.0}, {2.0}});
  const std::vector<int> region = {0, 2};
  const NodeOutcome o = node_solve(SquaredError{1}, ds, region);
  ASSERT_TRUE(o.solution);
  const NodeSolution& ns = *o.solution;
  EXPECT_DOUBLE_EQ(ns.z0[0], 1.0);
  EXPECT_EQ(ns.H0, MatrixXd::Identity(1, 1));
  EXPECT_EQ(ns.n_active(), 0);
  EXPECT_FALSE(ns.kkt.regularized);
  EXPECT_EQ(solve_with(ns.kkt, VectorXd::Constant(1, 3.25))[0], 3.25);
}

TEST(NodeSolve, CvarSimplexBindsNonnegativity) {
  Rng rng(21);
  const int n = 80;
  RowMatrix Y(n, 3);
  for (int i = 0; i < n; ++i) Y.row(i) << 1.0 + normal(rng), 1.0 + normal(rng), -5.0 + 0.1 * normal(rng);
  CVaRPortfolio cp;
  cp.d = 3;
  const ProblemSpec spec = cp;
  const NodeOutcome o = node_solve(spec, outcomes_only(Y), iota_rows(n));
  ASSERT_TRUE(o.solution);
  const NodeSolution& ns = *o.solution;
  // Row 2 of A_ub is -z_3 <= 0.
  EXPECT_NE(std::find(ns.ub_active.begin(), ns.ub_active.end(), 2), ns.ub_active.end());
  EXPECT_NEAR(ns.z0[2], 0.0, 1e-9);
  EXPECT_LT(ns.stationarity_residual, 1e-6);
  // The multiplier on z_3 >= 0 agrees with the LP dual.
  const SolveResult sr = solve_weighted(spec, outcomes_only(Y), WeightedRows::uniform(iota_rows(n)));
  const auto k = std::find(ns.ub_active.begin(), ns.ub_active.end(), 2) - ns.ub_active.begin();
  const auto first_ub = ns.active_rows.rows() - static_cast<Eigen::Index>(ns.ub_active.size());
  EXPECT_NEAR(ns.multipliers[first_ub + k], sr.ub_duals[2], 1e-6);
}

TEST(NodeSolve, CapacitatedNewsvendorMatchesGrid) {
  Rng rng(22);
  const int n = 50;
  RowMatrix Y(n, 2);
  for (int i = 0; i < n; ++i) Y.row(i) << uniform(rng, 5, 10), uniform(rng, 5, 10);
  Newsvendor nv = newsvendor({1.0, 1.0}, {3.0, 3.0});
  nv.capacity = 10.0;
  const ProblemSpec spec = nv;
  const Dataset ds = outcomes_only(Y);
  const NodeOutcome o = node_solve(spec, ds, iota_rows(n));
  ASSERT_TRUE(o.solution);
  const NodeSolution& ns = *o.solution;
  EXPECT_NE(std::find(ns.ub_active.begin(), ns.ub_active.end(), 0), ns.ub_active.end());
  // Brute force over the capacity face (the unconstrained quantiles sum past C)
  // and a coarse interior grid.
  double best = std::numeric_limits<double>::infinity();
  const std::vector<int> all = iota_rows(n);
  auto f = [&](double a, double b) { return weighted_objective(spec, (VectorXd(2) << a, b).finished(), ds,
                                                                WeightedRows::uniform(all)); };
  for (int k = 0; k <= 10000; ++k) best = std::min(best, f(k * 1e-3, 10.0 - k * 1e-3));
  for (int a = 0; a <= 100; ++a)
    for (int b = 0; a + b <= 100; ++b) best = std::min(best, f(0.1 * a, 0.1 * b));
  EXPECT_LE(ns.value, best + 1e-9);
  EXPECT_GE(ns.value, best - 0.01);
}

TEST(NodeSolve, InfeasibleRegionIsDegenerate) {
  RowMatrix Y(3, 1);
  Y << 10.0, 12.0, 14.0;
  Newsvendor nv = newsvendor({1.0}, {1.0});
  nv.capacity = 1.0;
  nv.service_level = 0.5;
  const NodeOutcome o = node_solve(nv, outcomes_only(Y), iota_rows(3));
  EXPECT_FALSE(o.solution);
  EXPECT_FALSE(o.degenerate_reason.empty());
}

struct NodeFixture {
  std::string name;
  ProblemSpec spec;
  Dataset ds;
};

std::vector<NodeFixture> node_fixtures() {
  std::vector<NodeFixture> out;
  // Uncapacitated newsvendor is solved by a closed-form quantile, not an LP/QP.
  for (const auto& id : harness::scenario_ids()) {
    if (id == "newsvendor-trunc") continue;
    const auto sc = harness::make_scenario(id);
    out.push_back({id, sc.problem, harness::simulate(sc, 400, 31)});
  }
  const auto nv = harness::make_scenario("newsvendor-trunc");
  Newsvendor cap = *nv.problem.as<Newsvendor>();
  cap.capacity = 9.0;
  out.push_back({"newsvendor-capacity", cap, harness::simulate(nv, 400, 31)});
  cap.service_level = 0.9;
  out.push_back({"newsvendor-service", cap, harness::simulate(nv, 400, 31)});
  return out;
}

// Stationarity, feasibility and multiplier signs on random regions of every
// LP/QP-solved problem family.
TEST(NodeSolve, KktPropertiesOnRandomRegions) {
  Rng rng(23);
  int checked = 0;
  for (const auto& fx : node_fixtures()) {
    const ConstraintSet cs = fx.spec.constraints();
    for (int t = 0; t < 6; ++t) {
      const int m = 30 + static_cast<int>(uniform(rng, 0, 150));
      std::vector<int> rows(m);
      for (int& r : rows) r = static_cast<int>(uniform(rng, 0, fx.ds.n() - 1e-9));
      const NodeOutcome o = node_solve(fx.spec, fx.ds, rows);
      if (!o.solution) continue;
      const NodeSolution& ns = *o.solution;
      ++checked;
      EXPECT_LE(ns.stationarity_residual, 1e-5 * (1.0 + ns.grad_f0.norm())) << fx.name << " m=" << m;
      // Recompute the residual from the reported multipliers.
      const VectorXd res = ns.grad_f0 + ns.active_rows.transpose() * ns.multipliers;
      EXPECT_NEAR(res.norm(), ns.stationarity_residual, 1e-9 * (1.0 + ns.grad_f0.norm()));
      for (Eigen::Index k = 0; k < ns.multipliers.size(); ++k)
        if (!ns.active_free[k]) EXPECT_GE(ns.multipliers[k], 0.0) << fx.name;
      EXPECT_LE(ns.n_active(), ns.active_rows.rows());
      if (cs.n_eq()) EXPECT_LE((cs.A_eq * ns.z0 - cs.b_eq).cwiseAbs().maxCoeff(), 1e-8) << fx.name;
      if (cs.n_ub()) EXPECT_LE((cs.A_ub * ns.z0 - cs.b_ub).maxCoeff(), 1e-8) << fx.name;
      for (int c = 0; c < ns.G0.size(); ++c) EXPECT_LE(ns.G0[c], 1e-8) << fx.name;
    }
  }
  EXPECT_GE(checked, 25);
}

// ---------------------------------------------------------------- estimators

TEST(GradContributions, NewsvendorMedianCase) {
  const Dataset ds = outcomes_only((RowMatrix(4, 1) << 1, 2, 3, 4).finished());
  const ProblemSpec spec = newsvendor({1.0}, {1.0});
  const VectorXd z0 = VectorXd::Constant(1, 2.5);
  const std::vector<int> rows = iota_rows(4);
  const RowMatrix G = grad_contributions(spec, z0, ds, rows, make_node_context(spec, z0, ds, rows));
  EXPECT_EQ(G.col(0).mean(), 0.0);
  EXPECT_EQ(G(0, 0), 1.0);
  EXPECT_EQ(G(3, 0), -1.0);
}

TEST(GradContributions, SquaredErrorRowsAndSubregionMean) {
  const Dataset ds = testing::gaussian_dataset(30, 2, 3, 4);
  const ProblemSpec spec = SquaredError{3};
  const std::vector<int> rows = iota_rows(30);
  const VectorXd z0 = (VectorXd(3) << 0.1, -0.2, 0.3).finished();
  const RowMatrix G = grad_contributions(spec, z0, ds, rows, make_node_context(spec, z0, ds, rows));
  for (int i = 0; i < 30; ++i) EXPECT_EQ(G.row(i), z0.transpose() - ds.Y.row(i));
  const VectorXd h1 = G.topRows(12).colwise().mean().transpose();
  const VectorXd y1 = ds.Y.topRows(12).colwise().mean().transpose();
  EXPECT_LE((h1 - (z0 - y1)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(GradContributions, CvarRowsAboveQuantileHaveZeroFirstBlock) {
  Rng rng(5);
  const int n = 50;
  const Dataset ds = outcomes_only(testing::gaussian_matrix(n, 3, rng));
  CVaRPortfolio cp;
  cp.d = 3;
  const ProblemSpec spec = cp;
  const VectorXd z0 = (VectorXd(4) << 0.2, 0.3, 0.5, -0.4).finished();
  const std::vector<int> rows = iota_rows(n);
  const NodeContext ctx = make_node_context(spec, z0, ds, rows);
  const RowMatrix G = grad_contributions(spec, z0, ds, rows, ctx);
  int above = 0;
  for (int i = 0; i < n; ++i) {
    if (ds.Y.row(i).dot(z0.head(3)) > ctx.quantile) {
      ++above;
      EXPECT_EQ(G.row(i).head(3).norm(), 0.0);
      EXPECT_EQ(G(i, 3), -1.0);
    }
  }
  EXPECT_EQ(above, n - 10);
}

TEST(GradContributions, NodeHingeActivityDiffersOnlyAtKinks) {
  const auto sc = harness::make_scenario("cvar-gaussian");
  const Dataset ds = harness::simulate(sc, 200, 9);
  const std::vector<int> rows = iota_rows(200);
  const NodeOutcome o = node_solve(sc.problem, ds, rows);
  ASSERT_TRUE(o.solution);
  const NodeSolution& ns = *o.solution;
  const double w = ns.z0[3];
  for (int i = 0; i < 200; ++i) {
    const double r = ds.Y.row(i).dot(ns.z0.head(3));
    const double a = ns.ctx.hinge_active(i, 0);
    if (r < w - 1e-9) EXPECT_EQ(a, 1.0);
    if (r > w + 1e-9) EXPECT_EQ(a, 0.0);
  }
}

// Central differences of the empirical subregion objective.
VectorXd fd_gradient(const ProblemSpec& spec, const VectorXd& z, const Dataset& ds, std::span<const int> rows) {
  const double h = 1e-5;
  VectorXd g(z.size());
  const WeightedRows s = WeightedRows::uniform(rows);
  for (int k = 0; k < z.size(); ++k) {
    VectorXd zp = z, zm = z;
    zp[k] += h;
    zm[k] -= h;
    g[k] = (weighted_objective(spec, zp, ds, s) - weighted_objective(spec, zm, ds, s)) / (2 * h);
  }
  return g;
}

TEST(GradContributions, MatchFiniteDifferencesOnSmoothProblems) {
  Rng rng(6);
  for (int rep = 0; rep < 10; ++rep) {
    const Dataset ds = testing::gaussian_dataset(60, 2, 3, 100 + rep);
    const std::vector<int> all = iota_rows(60);
    const std::vector<int> sub(all.begin(), all.begin() + 25);
    VariancePortfolio vp;
    vp.d = 3;
    vp.mean_weight = 0.5;
    const ProblemSpec specs[2] = {SquaredError{3}, vp};
    for (const auto& spec : specs) {
      // At the region optimum for the portfolio (its last coordinate uses the region mean).
      VectorXd z0 = solve_weighted(spec, ds, WeightedRows::uniform(all)).z;
      if (spec.as<SquaredError>()) z0 += 0.3 * VectorXd::Ones(3);
      const RowMatrix G = grad_contributions(spec, z0, ds, all, make_node_context(spec, z0, ds, all));
      VectorXd h = VectorXd::Zero(z0.size());
      for (int k = 0; k < 25; ++k) h += G.row(k).transpose() / 25.0;
      EXPECT_LE((h - fd_gradient(spec, z0, ds, sub)).cwiseAbs().maxCoeff(), 1e-4) << spec.id();
    }
  }
}

TEST(GradContributions, NewsvendorMatchesUniformCdf) {
  Rng rng(7);
  const int n = 100000;
  RowMatrix Y(n, 1);
  for (int i = 0; i < n; ++i) Y(i, 0) = uniform(rng);
  const Dataset ds = outcomes_only(Y);
  const ProblemSpec spec = newsvendor({1.0}, {1.0});
  const VectorXd z0 = VectorXd::Constant(1, 0.6);
  const std::vector<int> rows = iota_rows(n);
  const RowMatrix G = grad_contributions(spec, z0, ds, rows, make_node_context(spec, z0, ds, rows));
  EXPECT_NEAR(G.col(0).mean(), 0.2, 0.02);
}

TEST(HessianEstimate, SquaredErrorIsIdentity) {
  const Dataset ds = testing::gaussian_dataset(10, 1, 2, 1);
  const ProblemSpec spec = SquaredError{2};
  const std::vector<int> rows = iota_rows(10);
  const VectorXd z0 = VectorXd::Zero(2);
  EXPECT_EQ(hessian_estimate(spec, z0, ds, rows, make_node_context(spec, z0, ds, rows)), MatrixXd::Identity(2, 2));
}

TEST(HessianEstimate, NewsvendorKdeDiagonal) {
  Rng rng(8);
  const int n = 300;
  RowMatrix Y(n, 2);
  for (int i = 0; i < n; ++i) Y.row(i) << 3.0 + normal(rng), 1.0 + 0.5 * normal(rng);
  const Dataset ds = outcomes_only(Y);
  const ProblemSpec spec = newsvendor({5.0, 0.05}, {100.0, 1.0});
  const std::vector<int> rows = iota_rows(n);
  const VectorXd z0 = (VectorXd(2) << 3.2, 0.9).finished();
  const MatrixXd H = hessian_estimate(spec, z0, ds, rows, make_node_context(spec, z0, ds, rows));
  EXPECT_EQ(H(0, 1), 0.0);
  EXPECT_EQ(H(1, 0), 0.0);
  const double ab[2] = {105.0, 1.05};
  for (int l = 0; l < 2; ++l) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = Y(i, l);
    // Box kernel with the Silverman bandwidth floored at log(n)/n.
    double mean = std::accumulate(v.begin(), v.end(), 0.0) / n, ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double b = std::max(1.06 * std::sqrt(ss / (n - 1)) * std::pow(n, -0.2), std::log(n) / n);
    const double count = std::count_if(v.begin(), v.end(), [&](double x) { return std::abs(x - z0[l]) <= b / 2; });
    EXPECT_NEAR(H(l, l), ab[l] * count / (n * b), 1e-12 * ab[l]);
  }
}

TEST(HessianEstimate, ConstantPortfolioOutcomesAreSingular) {
  const VectorXd m = (VectorXd(3) << 0.5, -1.0, 2.0).finished();
  RowMatrix Y(5, 3);
  for (int i = 0; i < 5; ++i) Y.row(i) = m.transpose();
  VariancePortfolio vp;
  vp.d = 3;
  const ProblemSpec spec = vp;
  const Dataset ds = outcomes_only(Y);
  const std::vector<int> rows = iota_rows(5);
  const VectorXd z0 = (VectorXd(4) << 0.2, 0.3, 0.5, 0.0).finished();
  const MatrixXd H = hessian_estimate(spec, z0, ds, rows, make_node_context(spec, z0, ds, rows));
  MatrixXd expect(4, 4);
  expect << 2.0 * m * m.transpose(), -2.0 * m, -2.0 * m.transpose(), 2.0;
  EXPECT_LE((H - expect).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(std::abs(H.determinant()), 1e-9);
}

TEST(StochContributions, MeanReturnFloorValues) {
  Rng rng(9);
  VariancePortfolio vp;
  vp.d = 3;
  vp.return_floor = 0.0;
  const ProblemSpec spec = vp;
  const Dataset ds = outcomes_only(testing::gaussian_matrix(8, 3, rng));
  const VectorXd z0 = (VectorXd(4) << 0.2, 0.3, 0.5, 0.1).finished();
  const StochContributions sc = stoch_contributions(spec, z0, ds, iota_rows(8));
  for (int i = 0; i < 8; ++i) {
    EXPECT_DOUBLE_EQ(sc.values(i, 0), -ds.Y.row(i).dot(z0.head(3)));
    for (int l = 0; l < 3; ++l) EXPECT_EQ(sc.gradients(i, l), -ds.Y(i, l));
    EXPECT_EQ(sc.gradients(i, 3), 0.0);
  }
}

TEST(StochContributions, ConstantOutcomesGiveEqualGradients) {
  RowMatrix Y(4, 2);
  for (int i = 0; i < 4; ++i) Y.row(i) << 1.5, -0.5;
  VariancePortfolio vp;
  vp.d = 2;
  vp.return_floor = 0.3;
  const StochContributions sc =
      stoch_contributions(vp, (VectorXd(3) << 0.5, 0.5, 0.0).finished(), outcomes_only(Y), iota_rows(4));
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(sc.gradients(i, 0), -1.5);
    EXPECT_EQ(sc.gradients(i, 1), 0.5);
  }
}

TEST(StochContributions, ServiceLevelBoundary) {
  RowMatrix Y(3, 2);
  Y << 1, 2, 3, 1, 2, 2;
  Newsvendor nv = newsvendor({1.0, 1.0}, {1.0, 1.0});
  nv.service_level = 0.0;
  const StochContributions sc =
      stoch_contributions(nv, (VectorXd(2) << 5.0, 5.0).finished(), outcomes_only(Y), iota_rows(3));
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(sc.values(i, 0), 0.0);
    EXPECT_EQ(sc.gradients(i, 0), 0.0);
  }
}

}  // namespace
}  // namespace sof
