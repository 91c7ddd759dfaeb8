// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <span>
#include <vector>

#include "sof/dataset.hpp"
#include "sof/error.hpp"
#include "sof/linalg.hpp"
#include "sof/lp.hpp"
#include "sof/problem.hpp"
#include "sof/qp.hpp"

namespace sof {

/// Weighted SAA solution. Duals follow grad + A_eq^T nu + A_ub^T lambda +
/// sum_k stoch_k dG_k = 0 (subgradient for piecewise-linear costs).
struct SolveResult {
  LPStatus status = LPStatus::kInfeasible;
  VectorXd z;
  double value = 0.0;
  VectorXd eq_duals;
  VectorXd ub_duals;
  VectorXd stoch_duals;
  // LP-solved hinge costs: per row (one column per hinge term of that row),
  // the dual-certified fraction of the hinge on its active side. Equals the
  // active-side indicator off the kink. Empty for other solvers.
  RowMatrix hinge_active;

  bool ok() const { return status == LPStatus::kOptimal; }
};

/// Weighted sample: dataset rows with positive weights summing to one.
struct WeightedRows {
  std::vector<int> rows;
  std::vector<double> w;

  static WeightedRows uniform(std::span<const int> rows) {
    WeightedRows s;
    s.rows.assign(rows.begin(), rows.end());
    s.w.assign(rows.size(), rows.empty() ? 0.0 : 1.0 / static_cast<double>(rows.size()));
    return s;
  }
  static WeightedRows from_dense(std::span<const double> weights) {
    WeightedRows s;
    double total = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
      require(std::isfinite(weights[i]) && weights[i] >= 0.0, ErrorCode::kConfig, "weights must be finite and >= 0");
      total += weights[i];
    }
    require(total > 0.0, ErrorCode::kAllZeroWeights, "all weights are zero");
    for (size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] > 0.0) {
        s.rows.push_back(static_cast<int>(i));
        s.w.push_back(weights[i] / total);
      }
    }
    return s;
  }
  int size() const { return static_cast<int>(rows.size()); }
};

namespace detail {

inline VectorXd weighted_mean_y(const Dataset& ds, const WeightedRows& s) {
  VectorXd m = VectorXd::Zero(ds.d());
  for (int k = 0; k < s.size(); ++k) m += s.w[k] * ds.Y.row(s.rows[k]).transpose();
  return m;
}

inline VectorXd bfs_path_flow(const CVaRShortestPath& p) {
  const int m = static_cast<int>(p.edges.size());
  std::vector<std::vector<int>> out(p.node_count);
  for (int e = 0; e < m; ++e) out[p.edges[e].first].push_back(e);
  std::vector<int> via(p.node_count, -1);
  std::vector<char> seen(p.node_count, 0);
  std::queue<int> q;
  q.push(p.source);
  seen[p.source] = 1;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int e : out[u]) {
      int v = p.edges[e].second;
      if (!seen[v]) {
        seen[v] = 1;
        via[v] = e;
        q.push(v);
      }
    }
  }
  VectorXd z = VectorXd::Zero(m);
  for (int v = p.sink; v != p.source && via[v] >= 0; v = p.edges[via[v]].first) z[via[v]] = 1.0;
  return z;
}

inline void append_row(MatrixXd& A, VectorXd& b, const VectorXd& a, double rhs) {
  A.conservativeResize(A.rows() + 1, a.size());
  A.row(A.rows() - 1) = a.transpose();
  b.conservativeResize(b.size() + 1);
  b[b.size() - 1] = rhs;
}

// CVaR-type costs: (1/alpha) max{w - s y^T z, 0} - w - rho s y^T z with x = (z, w).
inline SolveResult solve_cvar(const ProblemSpec& spec, const Dataset& ds, const WeightedRows& s,
                              const ConstraintSet& cs, int n_floor_rows) {
  const int d = spec.outcome_dim(), nx = d + 1, R = s.size();
  const double sign = spec.cvar_sign(), level = spec.cvar_level(), rho = spec.mean_weight();
  HingeLP lp;
  lp.c = VectorXd::Zero(nx);
  lp.c[d] = -1.0;
  if (rho != 0.0) lp.c.head(d) = -rho * sign * weighted_mean_y(ds, s);
  lp.G.resize(R, nx);
  lp.e = VectorXd::Zero(R);
  lp.a.resize(R);
  for (int k = 0; k < R; ++k) {
    auto y = ds.y(s.rows[k]);
    for (int l = 0; l < d; ++l) lp.G(k, l) = -sign * y[l];
    lp.G(k, d) = 1.0;
    lp.a[k] = s.w[k] / level;
  }
  lp.A_eq = cs.A_eq;
  lp.b_eq = cs.b_eq;
  lp.A_ub = cs.A_ub;
  lp.b_ub = cs.b_ub;
  VectorXd guess = VectorXd::Zero(nx);
  if (auto* sp = spec.as<CVaRShortestPath>()) {
    guess.head(d) = bfs_path_flow(*sp);
  } else {
    guess.head(d).setConstant(1.0 / d);
  }
  std::vector<double> r(R);
  for (int k = 0; k < R; ++k) r[k] = -lp.G.row(k).head(d).dot(guess.head(d));
  guess[d] = weighted_quantile(r, s.w, level);
  HingeLPResult hr = hinge_lp_solve(lp, &guess);
  SolveResult out;
  out.status = hr.status;
  if (hr.status != LPStatus::kOptimal) return out;
  out.z = hr.x;
  out.eq_duals = hr.eq_duals;
  const int n_det = static_cast<int>(hr.ub_duals.size()) - n_floor_rows;
  out.ub_duals = hr.ub_duals.head(n_det);
  out.stoch_duals = hr.ub_duals.tail(n_floor_rows);
  out.hinge_active.resize(R, 1);
  for (int k = 0; k < R; ++k) out.hinge_active(k, 0) = std::clamp(hr.hinge_duals[k] / lp.a[k], 0.0, 1.0);
  return out;
}

}  // namespace detail

/// Minimises sum_k w_k c(z; Y_{rows_k}) over the problem's constraint set with
/// stochastic constraints replaced by their weighted sample averages (dropped
/// when `relax_stochastic`).
inline SolveResult solve_weighted(const ProblemSpec& spec, const Dataset& ds, const WeightedRows& s,
                                  bool relax_stochastic = false) {
  require(s.size() > 0, ErrorCode::kEmpty, "solve_weighted needs at least one row");
  require(ds.d() == spec.outcome_dim(), ErrorCode::kDimensionMismatch, "dataset outcome dim does not match problem");
  const int dz = spec.decision_dim();
  ConstraintSet cs = spec.constraints();
  if (relax_stochastic) cs.stochastic.clear();
  SolveResult out;

  if (spec.as<SquaredError>()) {
    out.status = LPStatus::kOptimal;
    out.z = detail::weighted_mean_y(ds, s);
  } else if (auto* p = spec.as<Newsvendor>()) {
    const int d = static_cast<int>(p->alpha.size());
    if (!p->capacity && (!p->service_level || relax_stochastic)) {
      out.status = LPStatus::kOptimal;
      out.z.resize(d);
      std::vector<double> vals(s.size());
      for (int l = 0; l < d; ++l) {
        for (int k = 0; k < s.size(); ++k) vals[k] = ds.Y(s.rows[k], l);
        out.z[l] = weighted_quantile(vals, s.w, p->beta[l] / (p->alpha[l] + p->beta[l]));
      }
    } else if (cs.stochastic.empty()) {
      // max{a(z-y), b(y-z)} = a(z-y) + (a+b) max{y-z, 0}.
      HingeLP lp;
      lp.c = p->alpha;
      const int R = s.size() * d;
      lp.G = MatrixXd::Zero(R, d);
      lp.e.resize(R);
      lp.a.resize(R);
      for (int k = 0; k < s.size(); ++k) {
        for (int l = 0; l < d; ++l) {
          const int r = k * d + l;
          lp.G(r, l) = -1.0;
          lp.e[r] = ds.Y(s.rows[k], l);
          lp.a[r] = s.w[k] * (p->alpha[l] + p->beta[l]);
        }
      }
      lp.A_eq = cs.A_eq;
      lp.b_eq = cs.b_eq;
      lp.A_ub = cs.A_ub;
      lp.b_ub = cs.b_ub;
      HingeLPResult hr = hinge_lp_solve(lp);
      out.status = hr.status;
      if (!out.ok()) return out;
      out.z = hr.x;
      out.eq_duals = hr.eq_duals;
      out.ub_duals = hr.ub_duals;
      out.stoch_duals = VectorXd(0);
      out.hinge_active.resize(s.size(), d);
      for (int r = 0; r < R; ++r) out.hinge_active(r / d, r % d) = std::clamp(hr.hinge_duals[r] / lp.a[r], 0.0, 1.0);
    } else {
      // Epigraph LP over (z, u) with u_il >= y_il - z_l, u >= 0.
      const int R = s.size() * d;
      const int nx = d + R;
      VectorXd c = VectorXd::Zero(nx);
      c.head(d) = p->alpha;
      MatrixXd A_ub = MatrixXd::Zero(R, nx);
      VectorXd b_ub(R);
      for (int k = 0; k < s.size(); ++k) {
        for (int l = 0; l < d; ++l) {
          const int r = k * d + l;
          c[d + r] = s.w[k] * (p->alpha[l] + p->beta[l]);
          A_ub(r, l) = -1.0;
          A_ub(r, d + r) = -1.0;
          b_ub[r] = -ds.Y(s.rows[k], l);
        }
      }
      const int n_hinge_rows = R;
      for (int k = 0; k < cs.n_ub(); ++k) {
        VectorXd a = VectorXd::Zero(nx);
        a.head(d) = cs.A_ub.row(k).transpose();
        detail::append_row(A_ub, b_ub, a, cs.b_ub[k]);
      }
      const bool service = !cs.stochastic.empty();
      if (service) {
        VectorXd a = VectorXd::Zero(nx);
        for (int k = 0; k < s.size(); ++k)
          for (int l = 0; l < d; ++l) a[d + k * d + l] = s.w[k];
        detail::append_row(A_ub, b_ub, a, *p->service_level);
      }
      VectorXd lower = VectorXd::Constant(nx, -kInf);
      lower.tail(R).setZero();
      LPResult lp = lp_solve(c, MatrixXd::Zero(0, nx), VectorXd(0), A_ub, b_ub, lower);
      out.status = lp.status;
      if (!out.ok()) return out;
      out.z = lp.z.head(d);
      out.eq_duals = VectorXd(0);
      out.ub_duals = lp.ub_duals.segment(n_hinge_rows, cs.n_ub());
      out.stoch_duals = service ? VectorXd(lp.ub_duals.tail(1)) : VectorXd(0);
      // Hinge dual lambda_r = (c_r + w_k mu) * fraction.
      const double mu_s = service ? lp.ub_duals[lp.ub_duals.size() - 1] : 0.0;
      out.hinge_active.resize(s.size(), d);
      for (int r = 0; r < R; ++r)
        out.hinge_active(r / d, r % d) = std::clamp(lp.ub_duals[r] / (c[d + r] + s.w[r / d] * mu_s), 0.0, 1.0);
    }
  } else if (auto* p = spec.as<VariancePortfolio>()) {
    const int d = p->d;
    MatrixXd Q = MatrixXd::Zero(dz, dz);
    VectorXd a(dz);
    for (int k = 0; k < s.size(); ++k) {
      auto y = ds.y(s.rows[k]);
      for (int l = 0; l < d; ++l) a[l] = y[l];
      a[d] = -1.0;
      Q.selfadjointView<Eigen::Lower>().rankUpdate(a, 2.0 * s.w[k]);
    }
    Q = Q.selfadjointView<Eigen::Lower>();
    VectorXd ybar = detail::weighted_mean_y(ds, s);
    VectorXd c = VectorXd::Zero(dz);
    c.head(d) = -p->mean_weight * ybar;
    MatrixXd A_ub = cs.A_ub;
    VectorXd b_ub = cs.b_ub;
    for (const auto& g : cs.stochastic) {
      VectorXd row = VectorXd::Zero(dz);
      row.head(d) = -ybar;
      detail::append_row(A_ub, b_ub, row, -g.param);
    }
    QPResult qp = qp_solve(Q, c, cs.A_eq, cs.b_eq, A_ub, b_ub);
    out.status = qp.status;
    if (!out.ok()) return out;
    out.z = qp.z;
    out.eq_duals = qp.eq_duals;
    out.ub_duals = qp.ub_duals.head(cs.n_ub());
    out.stoch_duals = qp.ub_duals.tail(cs.stochastic.size());
  } else {
    const int d = spec.outcome_dim();
    ConstraintSet aug = cs;
    if (!cs.stochastic.empty()) {
      VectorXd ybar = detail::weighted_mean_y(ds, s);
      for (const auto& g : cs.stochastic) {
        VectorXd row = VectorXd::Zero(dz);
        row.head(d) = -ybar;
        detail::append_row(aug.A_ub, aug.b_ub, row, -g.param);
      }
    }
    out = detail::solve_cvar(spec, ds, s, aug, static_cast<int>(cs.stochastic.size()));
    if (!out.ok()) return out;
  }
  double v = 0.0;
  for (int k = 0; k < s.size(); ++k) v += s.w[k] * spec.cost(out.z, ds.y(s.rows[k]));
  out.value = v;
  return out;
}

/// Dense-weight entry point: weights is an n-vector on the simplex.
inline SolveResult solve_weighted(const ProblemSpec& spec, const Dataset& ds, std::span<const double> weights,
                                  bool relax_stochastic = false) {
  require(static_cast<int>(weights.size()) == ds.n(), ErrorCode::kDimensionMismatch, "weights length != n");
  return solve_weighted(spec, ds, WeightedRows::from_dense(weights), relax_stochastic);
}

}  // namespace sof
