// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "sof/dataset.hpp"
#include "sof/error.hpp"
#include "sof/harness/scenarios.hpp"
#include "sof/linalg.hpp"
#include "sof/problem.hpp"
#include "sof/qp.hpp"
#include "sof/rng.hpp"
#include "sof/solve.hpp"

namespace sof::harness {

/// Mean cost of z over outcome draws; for CVaR problems the auxiliary
/// threshold is re-optimised, so the result is the empirical CVaR objective.
inline double empirical_risk(const ProblemSpec& spec, const VectorXd& z, const RowMatrix& Y) {
  VectorXd zz = z;
  if (spec.as<CVaRPortfolio>() || spec.as<CVaRShortestPath>()) {
    const int d = spec.outcome_dim();
    std::vector<double> r(Y.rows());
    for (Eigen::Index k = 0; k < Y.rows(); ++k) r[k] = spec.cvar_sign() * Y.row(k).dot(z.head(d));
    zz[d] = quantile_type1(r, spec.cvar_level());
  }
  double s = 0.0;
  for (Eigen::Index k = 0; k < Y.rows(); ++k)
    s += spec.cost(zz, std::span<const double>(Y.row(k).data(), static_cast<size_t>(Y.cols())));
  return s / static_cast<double>(Y.rows());
}

/// Variance-objective risk under true moments: z^T Sigma z - rho mu^T z.
inline double moment_risk(const ProblemSpec& spec, const VectorXd& z, const VectorXd& mu, const MatrixXd& Sigma) {
  const int d = static_cast<int>(mu.size());
  const VectorXd w = z.head(d);
  return w.dot(Sigma * w) - spec.mean_weight() * mu.dot(w);
}

/// argmin z^T Sigma z - rho mu^T z over the deterministic constraints of a
/// variance-portfolio problem, optionally with mu^T z >= floor. Returns the
/// full decision (weights, then the mean-return auxiliary t = mu^T z).
inline VectorXd moment_optimum(const ProblemSpec& spec, const VectorXd& mu, const MatrixXd& Sigma,
                               std::optional<double> floor) {
  const int d = static_cast<int>(mu.size());
  const ConstraintSet cs = spec.constraints();
  MatrixXd A_eq = cs.A_eq.leftCols(d);
  MatrixXd A_ub = cs.A_ub.leftCols(d);
  VectorXd b_ub = cs.b_ub;
  if (floor) {
    A_ub.conservativeResize(A_ub.rows() + 1, d);
    b_ub.conservativeResize(b_ub.size() + 1);
    A_ub.row(A_ub.rows() - 1) = -mu.transpose();
    b_ub[b_ub.size() - 1] = -*floor;
  }
  QPResult r = qp_solve(2.0 * Sigma, -spec.mean_weight() * mu, A_eq, cs.b_eq, A_ub, b_ub);
  require(r.status == LPStatus::kOptimal, ErrorCode::kInfeasible,
          std::string("true-moment optimum: ") + to_string(r.status));
  VectorXd z(d + 1);
  z.head(d) = r.z;
  z[d] = mu.dot(r.z);
  return z;
}

/// Query points with their conditional draws and conditional-optimal risks,
/// shared by every method in a benchmark cell.
struct EvalSet {
  RowMatrix Xq;
  std::vector<RowMatrix> Y;        // conditional draws (empty under true moments)
  std::vector<VectorXd> z_star;    // conditional-optimal decisions
  std::vector<double> opt_risk;    // their risk on the same draws / moments
};

inline EvalSet make_eval_set(const Scenario& s, int n_query, int n_cond, int n_saa, std::uint64_t seed) {
  require(n_query >= 1 && n_cond >= 1 && n_saa >= 1, ErrorCode::kConfig, "evaluation sizes must be >= 1");
  EvalSet ev;
  Rng rng(derive_seed(seed, hash_string("eval:" + s.id)));
  ev.Xq.resize(n_query, s.p);
  for (int q = 0; q < n_query; ++q) {
    const double* x = ev.Xq.row(q).data();
    sample_x(s, rng, ev.Xq.row(q).data());
    if (s.optimum == OptimumKind::kTrueMoments) {
      const VectorXd mu = s.cond_mean(x);
      const MatrixXd S = s.cond_cov(x);
      const auto* vp = s.problem.as<VariancePortfolio>();
      ev.Y.emplace_back();
      ev.z_star.push_back(moment_optimum(s.problem, mu, S, vp ? vp->return_floor : std::nullopt));
      ev.opt_risk.push_back(moment_risk(s.problem, ev.z_star.back(), mu, S));
      continue;
    }
    ev.Y.push_back(sample_conditional(s, x, n_cond, rng));
    VectorXd z;
    if (s.optimum == OptimumKind::kNewsvendorQuantile) {
      z = s.optimum_closed_form(x);
    } else {
      Rng saa_rng(derive_seed(seed, 0x5aa0000ULL + static_cast<std::uint64_t>(q)));
      Dataset big = make_dataset(RowMatrix::Zero(n_saa, 1), sample_conditional(s, x, n_saa, saa_rng));
      std::vector<int> all(n_saa);
      for (int i = 0; i < n_saa; ++i) all[i] = i;
      SolveResult r = solve_weighted(s.problem, big, WeightedRows::uniform(all));
      require(r.ok(), ErrorCode::kInfeasible, "conditional SAA optimum failed");
      z = r.z;
    }
    ev.opt_risk.push_back(empirical_risk(s.problem, z, ev.Y.back()));
    ev.z_star.push_back(std::move(z));
  }
  return ev;
}

struct RiskResult {
  double relative_risk = 0.0;
  double policy_risk = 0.0;   // mean over queries
  double optimal_risk = 0.0;  // mean over queries
  double mean_shortfall = 0.0;       // mean of R - R_hat(x) (return-floor problems)
  double mean_cond_violation = 0.0;  // mean of max(R - R_hat(x), 0)
};

/// Ratio of mean policy risk to mean conditional-optimal risk over the eval set.
/// For return-floor problems the benchmark at x is the minimum risk subject to
/// the realised mean return of the policy's decision.
inline RiskResult relative_risk(const Scenario& s, const EvalSet& ev, const std::vector<VectorXd>& decisions) {
  const int nq = static_cast<int>(ev.Xq.rows());
  require(static_cast<int>(decisions.size()) == nq, ErrorCode::kDimensionMismatch, "one decision per query needed");
  RiskResult out;
  const auto* vp = s.problem.as<VariancePortfolio>();
  const bool floor = vp && vp->return_floor.has_value();
  for (int q = 0; q < nq; ++q) {
    const double* x = ev.Xq.row(q).data();
    const VectorXd& z = decisions[q];
    if (s.optimum == OptimumKind::kTrueMoments) {
      const VectorXd mu = s.cond_mean(x);
      const MatrixXd S = s.cond_cov(x);
      out.policy_risk += moment_risk(s.problem, z, mu, S);
      if (floor) {
        const double r_hat = mu.dot(z.head(s.d));
        out.optimal_risk += moment_risk(s.problem, moment_optimum(s.problem, mu, S, r_hat), mu, S);
        out.mean_shortfall += *vp->return_floor - r_hat;
        out.mean_cond_violation += std::max(*vp->return_floor - r_hat, 0.0);
      } else {
        out.optimal_risk += ev.opt_risk[q];
      }
    } else {
      out.policy_risk += empirical_risk(s.problem, z, ev.Y[q]);
      out.optimal_risk += ev.opt_risk[q];
    }
  }
  out.policy_risk /= nq;
  out.optimal_risk /= nq;
  out.mean_shortfall /= nq;
  out.mean_cond_violation /= nq;
  out.relative_risk = out.policy_risk / out.optimal_risk;
  return out;
}

/// (SAA cost - policy cost) / (SAA cost - perfect-information cost) on test rows.
/// `decisions` holds the policy's decision for each test row.
inline double prescriptiveness(const ProblemSpec& spec, const Dataset& train, const Dataset& test,
                               const std::vector<VectorXd>& decisions) {
  require(static_cast<int>(decisions.size()) == test.n(), ErrorCode::kDimensionMismatch,
          "one decision per test row needed");
  std::vector<int> all(train.n());
  for (int i = 0; i < train.n(); ++i) all[i] = i;
  SolveResult saa = solve_weighted(spec, train, WeightedRows::uniform(all));
  require(saa.ok(), ErrorCode::kInfeasible, "SAA solve failed");
  double c_saa = 0.0, c_pol = 0.0, c_pi = 0.0;
  for (int i = 0; i < test.n(); ++i) {
    c_saa += spec.cost(saa.z, test.y(i));
    c_pol += spec.cost(decisions[i], test.y(i));
    const int row[1] = {i};
    SolveResult pi = solve_weighted(spec, test, WeightedRows::uniform(row));
    require(pi.ok(), ErrorCode::kInfeasible, "perfect-information solve failed");
    c_pi += pi.value;
  }
  const double denom = c_saa - c_pi;
  require(std::abs(denom) > 1e-12 * (1.0 + std::abs(c_saa)), ErrorCode::kDegenerateDenominator,
          "SAA cost equals perfect-information cost");
  return (c_saa - c_pol) / denom;
}

}  // namespace sof::harness
