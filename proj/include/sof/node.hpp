// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sof/dataset.hpp"
#include "sof/estimators.hpp"
#include "sof/linalg.hpp"
#include "sof/problem.hpp"
#include "sof/solve.hpp"

namespace sof {

/// Relative tolerance for treating an inequality as active at the node solution.
inline constexpr double kActiveTol = 1e-8;

struct NodeSolveOptions {
  double ridge = 1e-3;
  bool constraint_aware = true;
};

/// Node-level artifacts shared by every candidate split of one region.
struct NodeSolution {
  VectorXd z0;
  double value = 0.0;  // (1/n0) sum c(z0; Y_i) over the region
  int n0 = 0;
  NodeContext ctx;
  VectorXd grad_f0;
  MatrixXd H0;
  MatrixXd H_L;  // Lagrangian Hessian (H0 plus stochastic curvature)

  // Every active constraint row in KKT order: active stochastic, deterministic
  // equality, active deterministic inequality. Multipliers are estimated over
  // all of them; at degenerate vertices a pruned set can miss cone directions.
  MatrixXd active_rows;
  std::vector<bool> active_free;  // true for equality rows
  VectorXd multipliers;           // aligned with active_rows
  std::vector<int> ub_active;     // index into A_ub of each active inequality
  VectorXd stoch_lambda;          // one per stochastic constraint (zero when inactive)
  double stationarity_residual = 0.0;

  // Linearly independent subset of active_rows used in the KKT matrix.
  MatrixXd J;
  std::vector<int> stoch_active;  // index into ConstraintSet::stochastic, one per leading J row
  int n_det_eq = 0;

  VectorXd G0;   // region means of stochastic constraint values at z0
  MatrixXd dG0;  // region means of their gradients (m x d_z)

  MatrixXd hull_A;  // equality rows plus all active inequality rows
  VectorXd hull_b;

  bool constraint_aware = true;
  LUFactorization kkt;  // KKT matrix when constraint-aware, else H0

  int dz() const { return static_cast<int>(z0.size()); }
  int n_active() const { return static_cast<int>(J.rows()); }
};

struct NodeOutcome {
  std::optional<NodeSolution> solution;
  std::string degenerate_reason;
  RowMatrix contributions;
  StochContributions stoch;
};

/// Factors [[H, J^T], [J, 0]]. When singular, the ridge goes on the H block
/// only so the constraint rows J d = rhs stay exact.
inline LUFactorization lu_factor_kkt(MatrixXd K, int dz, double ridge) {
  try {
    return lu_factor(K, 0.0);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kSingularAfterRidge || ridge <= 0.0) throw;
  }
  K.topLeftCorner(dz, dz).diagonal().array() += ridge;
  LUFactorization f = lu_factor(K, 0.0);
  f.regularized = true;
  f.ridge = ridge;
  return f;
}

inline NodeOutcome node_solve(const ProblemSpec& spec, const Dataset& ds, std::span<const int> rows,
                              const NodeSolveOptions& opt = {}) {
  require(!rows.empty(), ErrorCode::kEmpty, "node_solve on empty region");
  NodeOutcome out;
  SolveResult sr = solve_weighted(spec, ds, WeightedRows::uniform(rows));
  if (!sr.ok()) {
    out.degenerate_reason = std::string("region solve ") + to_string(sr.status);
    return out;
  }
  NodeSolution ns;
  const int dz = spec.decision_dim();
  ns.z0 = sr.z;
  ns.value = sr.value;
  ns.n0 = static_cast<int>(rows.size());
  ns.constraint_aware = opt.constraint_aware;
  ns.ctx = make_node_context(spec, ns.z0, ds, rows);
  ns.ctx.hinge_active = std::move(sr.hinge_active);
  out.contributions = grad_contributions(spec, ns.z0, ds, rows, ns.ctx);
  ns.grad_f0 = out.contributions.colwise().mean().transpose();
  ns.H0 = hessian_estimate(spec, ns.z0, ds, rows, ns.ctx);
  ns.H_L = ns.H0;

  const ConstraintSet cs = spec.constraints();
  const int ms = static_cast<int>(cs.stochastic.size());
  out.stoch = stoch_contributions(spec, ns.z0, ds, rows, &ns.ctx.hinge_active);
  ns.G0 = ms ? VectorXd(out.stoch.values.colwise().mean().transpose()) : VectorXd(0);
  ns.dG0 = MatrixXd::Zero(ms, dz);
  if (ms) {
    VectorXd gm = out.stoch.gradients.colwise().mean().transpose();
    for (int c = 0; c < ms; ++c) ns.dG0.row(c) = gm.segment(c * dz, dz).transpose();
  }

  // Candidate active rows in KKT order, then prune dependent ones.
  std::vector<int> kind;  // 0 stochastic, 1 equality, 2 inequality
  std::vector<int> src;
  std::vector<VectorXd> cand;
  for (int c = 0; c < ms; ++c) {
    if (std::abs(ns.G0[c]) <= kActiveTol * (1.0 + std::abs(cs.stochastic[c].param))) {
      kind.push_back(0);
      src.push_back(c);
      cand.push_back(ns.dG0.row(c).transpose());
    }
  }
  std::vector<int> hull_rows_ub;
  for (int r = 0; r < cs.n_eq(); ++r) {
    kind.push_back(1);
    src.push_back(r);
    cand.push_back(cs.A_eq.row(r).transpose());
  }
  for (int r = 0; r < cs.n_ub(); ++r) {
    if (std::abs(cs.A_ub.row(r).dot(ns.z0) - cs.b_ub[r]) <= kActiveTol * (1.0 + std::abs(cs.b_ub[r]))) {
      kind.push_back(2);
      src.push_back(r);
      cand.push_back(cs.A_ub.row(r).transpose());
      hull_rows_ub.push_back(r);
    }
  }
  ns.hull_A.resize(cs.n_eq() + static_cast<int>(hull_rows_ub.size()), dz);
  ns.hull_b.resize(ns.hull_A.rows());
  for (int r = 0; r < cs.n_eq(); ++r) {
    ns.hull_A.row(r) = cs.A_eq.row(r);
    ns.hull_b[r] = cs.b_eq[r];
  }
  for (size_t k = 0; k < hull_rows_ub.size(); ++k) {
    ns.hull_A.row(cs.n_eq() + k) = cs.A_ub.row(hull_rows_ub[k]);
    ns.hull_b[cs.n_eq() + k] = cs.b_ub[hull_rows_ub[k]];
  }

  MatrixXd all(cand.size(), dz);
  for (size_t k = 0; k < cand.size(); ++k) all.row(k) = cand[k].transpose();
  ns.active_rows = all;
  ns.ub_active = hull_rows_ub;
  for (size_t k = 0; k < cand.size(); ++k) ns.active_free.push_back(kind[k] == 1);

  // Multipliers: min ||grad f0 + A^T nu|| with nu >= 0 on inequality rows.
  NNLSResult nn = nnls(all.transpose(), -ns.grad_f0, ns.active_free);
  ns.multipliers = nn.x;
  ns.stationarity_residual = nn.residual_norm;
  ns.stoch_lambda = VectorXd::Zero(ms);
  for (size_t k = 0; k < cand.size(); ++k)
    if (kind[k] == 0) ns.stoch_lambda[src[k]] = nn.x[k];

  std::vector<int> keep = independent_rows(all);
  ns.J.resize(keep.size(), dz);
  for (size_t k = 0; k < keep.size(); ++k) {
    const int idx = keep[k];
    ns.J.row(k) = all.row(idx);
    if (kind[idx] == 0) ns.stoch_active.push_back(src[idx]);
    if (kind[idx] == 1) ++ns.n_det_eq;
  }
  for (int c = 0; c < ms; ++c)
    if (ns.stoch_lambda[c] != 0.0)
      ns.H_L += ns.stoch_lambda[c] * stochastic_hessian(cs.stochastic[c], ns.z0, ds, rows, dz);

  try {
    if (opt.constraint_aware) {
      const int m = ns.n_active();
      MatrixXd K = MatrixXd::Zero(dz + m, dz + m);
      K.topLeftCorner(dz, dz) = ns.H_L;
      K.topRightCorner(dz, m) = ns.J.transpose();
      K.bottomLeftCorner(m, dz) = ns.J;
      ns.kkt = lu_factor_kkt(K, dz, opt.ridge);
    } else {
      ns.kkt = lu_factor(ns.H0, opt.ridge);
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kSingularAfterRidge && e.code() != ErrorCode::kNonFinite) throw;
    out.degenerate_reason = e.what();
    return out;
  }
  out.solution = std::move(ns);
  return out;
}

}  // namespace sof
