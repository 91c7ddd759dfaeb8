// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <vector>

#include "sof/dataset.hpp"
#include "sof/linalg.hpp"
#include "sof/problem.hpp"

namespace sof {

/// Region-level statistics shared by the per-sample estimators at one node.
struct NodeContext {
  double quantile = 0.0;  // CVaR: type-1 alpha-quantile of sign * y^T z0 over R0
  VectorXd mean_y;        // R0 mean of the outcomes
  // Optional per-row hinge activity from the node LP (see SolveResult). When
  // set, it replaces the plug-in indicators for the rows of R0.
  RowMatrix hinge_active;
};

inline NodeContext make_node_context(const ProblemSpec& spec, const VectorXd& z0, const Dataset& ds,
                                     std::span<const int> rows) {
  NodeContext ctx;
  ctx.mean_y = VectorXd::Zero(ds.d());
  for (int i : rows) ctx.mean_y += ds.Y.row(i).transpose();
  if (!rows.empty()) ctx.mean_y /= static_cast<double>(rows.size());
  if (spec.as<CVaRPortfolio>() || spec.as<CVaRShortestPath>()) {
    const int d = spec.outcome_dim();
    const double sign = spec.cvar_sign();
    std::vector<double> r(rows.size());
    for (size_t k = 0; k < rows.size(); ++k) r[k] = sign * ds.Y.row(rows[k]).dot(z0.head(d));
    ctx.quantile = quantile_type1(r, spec.cvar_level());
  }
  return ctx;
}

/// Per-sample gradient contributions at z0: row k averages over any subregion
/// to the estimated gradient of that subregion's objective.
inline RowMatrix grad_contributions(const ProblemSpec& spec, const VectorXd& z0, const Dataset& ds,
                                    std::span<const int> rows, const NodeContext& ctx) {
  const int dz = spec.decision_dim(), d = spec.outcome_dim();
  const int n = static_cast<int>(rows.size());
  RowMatrix G(n, dz);
  if (spec.as<SquaredError>()) {
    for (int k = 0; k < n; ++k) G.row(k) = z0.transpose() - ds.Y.row(rows[k]);
  } else if (auto* p = spec.as<Newsvendor>()) {
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < d; ++l)
        G(k, l) = p->alpha[l] - (p->alpha[l] + p->beta[l]) * (ctx.hinge_active.size()
                                                                   ? ctx.hinge_active(k, l)
                                                                   : (ds.Y(rows[k], l) > z0[l] ? 1.0 : 0.0));
  } else if (auto* p = spec.as<VariancePortfolio>()) {
    const double t = z0[d];
    const double m0z = ctx.mean_y.dot(z0.head(d));
    for (int k = 0; k < n; ++k) {
      const auto y = ds.Y.row(rows[k]);
      const double r = y.dot(z0.head(d));
      G.row(k).head(d) = (2.0 * (r - t) - p->mean_weight) * y;
      G(k, d) = 2.0 * (m0z - r);
    }
  } else {
    const double sign = spec.cvar_sign(), level = spec.cvar_level(), rho = spec.mean_weight();
    for (int k = 0; k < n; ++k) {
      const auto y = ds.Y.row(rows[k]);
      const double r = sign * y.dot(z0.head(d));
      const double ind = ctx.hinge_active.size() ? ctx.hinge_active(k, 0) : (r <= ctx.quantile ? 1.0 : 0.0);
      G.row(k).head(d) = (-(ind / level) - rho) * sign * y;
      G(k, d) = ind / level - 1.0;
    }
  }
  return G;
}

/// Estimated Hessian of the region objective at z0.
inline MatrixXd hessian_estimate(const ProblemSpec& spec, const VectorXd& z0, const Dataset& ds,
                                 std::span<const int> rows, const NodeContext& ctx) {
  const int dz = spec.decision_dim(), d = spec.outcome_dim();
  const int n = static_cast<int>(rows.size());
  MatrixXd H = MatrixXd::Zero(dz, dz);
  if (spec.as<SquaredError>()) return MatrixXd::Identity(dz, dz);
  if (auto* p = spec.as<Newsvendor>()) {
    std::vector<double> v(n);
    for (int l = 0; l < d; ++l) {
      for (int k = 0; k < n; ++k) v[k] = ds.Y(rows[k], l);
      H(l, l) = (p->alpha[l] + p->beta[l]) * kde_at(v, z0[l], default_bandwidth(v));
    }
    return H;
  }
  if (spec.as<VariancePortfolio>()) {
    MatrixXd M2 = MatrixXd::Zero(d, d);
    for (int i : rows) M2.selfadjointView<Eigen::Lower>().rankUpdate(ds.Y.row(i).transpose(), 1.0);
    M2 = M2.selfadjointView<Eigen::Lower>();
    M2 /= static_cast<double>(n);
    H.topLeftCorner(d, d) = 2.0 * M2;
    H.topRightCorner(d, 1) = -2.0 * ctx.mean_y;
    H.bottomLeftCorner(1, d) = -2.0 * ctx.mean_y.transpose();
    H(d, d) = 2.0;
    return H;
  }
  // CVaR: Gaussian plug-in moments of sign*Y given sign*Y^T z = q, scaled by
  // the box-kernel density of sign*Y^T z at q.
  const double sign = spec.cvar_sign(), level = spec.cvar_level();
  const VectorXd z = z0.head(d);
  const VectorXd m = sign * ctx.mean_y;
  MatrixXd S = MatrixXd::Zero(d, d);
  std::vector<double> r(n);
  for (int k = 0; k < n; ++k) {
    VectorXd y = sign * ds.Y.row(rows[k]).transpose();
    r[k] = y.dot(z);
    VectorXd c = y - m;
    S.selfadjointView<Eigen::Lower>().rankUpdate(c, 1.0);
  }
  S = S.selfadjointView<Eigen::Lower>();
  if (n > 1) S /= static_cast<double>(n - 1);
  const VectorXd Sz = S * z;
  const double s = z.dot(Sz);
  VectorXd E = m;
  MatrixXd V = S;
  if (s > 1e-12 * (1.0 + S.trace())) {
    E = m + Sz * ((ctx.quantile - m.dot(z)) / s);
    V = S - Sz * Sz.transpose() / s;
  }
  const MatrixXd EYY = V + E * E.transpose();
  const double mu = kde_at(r, ctx.quantile, default_bandwidth(r));
  H.topLeftCorner(d, d) = EYY;
  H.topRightCorner(d, 1) = -E;
  H.bottomLeftCorner(1, d) = -E.transpose();
  H(d, d) = 1.0;
  return (mu / level) * H;
}

/// Per-sample values and gradients of each stochastic constraint at z0.
/// Gradients are stored row-major: row k holds constraint 0's gradient,
/// then constraint 1's, each of length d_z.
struct StochContributions {
  RowMatrix values;     // n x m
  RowMatrix gradients;  // n x (m * d_z)
};

inline StochContributions stoch_contributions(const ProblemSpec& spec, const VectorXd& z0, const Dataset& ds,
                                              std::span<const int> rows, const RowMatrix* hinge_active = nullptr) {
  const ConstraintSet cs = spec.constraints();
  const int m = static_cast<int>(cs.stochastic.size()), dz = spec.decision_dim();
  const int n = static_cast<int>(rows.size());
  StochContributions sc;
  sc.values.resize(n, m);
  sc.gradients.resize(n, static_cast<Eigen::Index>(m) * dz);
  for (int k = 0; k < n; ++k) {
    auto y = ds.y(rows[k]);
    for (int c = 0; c < m; ++c) {
      sc.values(k, c) = stochastic_value(cs.stochastic[c], z0, y);
      double* g = sc.gradients.data() + static_cast<std::ptrdiff_t>(k) * m * dz + c * dz;
      stochastic_gradient(cs.stochastic[c], z0, y, g, dz);
      if (hinge_active && hinge_active->size() && cs.stochastic[c].kind == StochasticKind::kServiceLevel)
        for (int l = 0; l < cs.stochastic[c].d; ++l) g[l] = -(*hinge_active)(k, l);
    }
  }
  return sc;
}

/// Estimated Hessian of a stochastic constraint's region mean at z0 (zero for
/// the mean-return floor; box-kernel densities for the service level).
inline MatrixXd stochastic_hessian(const StochasticConstraint& g, const VectorXd& z0, const Dataset& ds,
                                   std::span<const int> rows, int dz) {
  MatrixXd H = MatrixXd::Zero(dz, dz);
  if (g.kind != StochasticKind::kServiceLevel) return H;
  std::vector<double> v(rows.size());
  for (int l = 0; l < g.d; ++l) {
    for (size_t k = 0; k < rows.size(); ++k) v[k] = ds.Y(rows[k], l);
    H(l, l) = kde_at(v, z0[l], default_bandwidth(v));
  }
  return H;
}

}  // namespace sof
