// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <boost/random/uniform_real_distribution.hpp>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sof/dataset.hpp"
#include "sof/error.hpp"
#include "sof/linalg.hpp"
#include "sof/node.hpp"
#include "sof/problem.hpp"
#include "sof/rng.hpp"
#include "sof/solve.hpp"

namespace sof {

enum class CriterionKind { kOracle, kApxRisk, kApxSoln, kVariance, kRandom };

/// Criterion selection. `constraint_aware = false` uses the unconstrained
/// formulas even when the problem has constraints. `scale` multiplies every
/// score and impurity (used to test scale invariance).
struct Criterion {
  CriterionKind kind = CriterionKind::kApxRisk;
  bool constraint_aware = true;
  double scale = 1.0;

  bool needs_node_solve() const { return kind == CriterionKind::kApxRisk || kind == CriterionKind::kApxSoln; }
  bool is_apx() const { return needs_node_solve(); }
};

inline std::string to_string(const Criterion& c) {
  std::string s;
  switch (c.kind) {
    case CriterionKind::kOracle: s = "oracle"; break;
    case CriterionKind::kApxRisk: s = "apx-risk"; break;
    case CriterionKind::kApxSoln: s = "apx-soln"; break;
    case CriterionKind::kVariance: s = "variance"; break;
    case CriterionKind::kRandom: s = "random"; break;
  }
  if (c.is_apx() && !c.constraint_aware) s += "-unconstrained";
  return s;
}

inline Criterion parse_criterion(const std::string& s) {
  Criterion c;
  std::string base = s;
  const std::string suffix = "-unconstrained";
  if (base.size() > suffix.size() && base.compare(base.size() - suffix.size(), suffix.size(), suffix) == 0) {
    c.constraint_aware = false;
    base.resize(base.size() - suffix.size());
  }
  if (base == "oracle") c.kind = CriterionKind::kOracle;
  else if (base == "apx-risk") c.kind = CriterionKind::kApxRisk;
  else if (base == "apx-soln") c.kind = CriterionKind::kApxSoln;
  else if (base == "variance") c.kind = CriterionKind::kVariance;
  else if (base == "random") c.kind = CriterionKind::kRandom;
  else fail(ErrorCode::kConfig, "unknown criterion '" + s + "'");
  require(c.constraint_aware || c.is_apx(), ErrorCode::kConfig, "'-unconstrained' applies only to apx criteria");
  return c;
}

/// Lower is better. Invalid candidates carry +inf.
struct SplitScore {
  double value = std::numeric_limits<double>::infinity();
  bool valid = false;
  bool regularized = false;
  bool projected = false;
  VectorXd d1, d2;  // perturbation directions (apx criteria only)
};

inline SplitScore invalid_score() { return SplitScore{}; }

inline SplitScore make_score(double v) {
  SplitScore s;
  s.value = v;
  s.valid = std::isfinite(v);
  if (!s.valid) s.value = std::numeric_limits<double>::infinity();
  return s;
}

inline double mean_cost(const ProblemSpec& spec, const VectorXd& z, const Dataset& ds, std::span<const int> rows) {
  double s = 0.0;
  for (int i : rows) s += spec.cost(z, ds.y(i));
  return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

/// Sum over sides of (n_j / n) * min_z mean cost on side j, each side fully re-optimised.
inline SplitScore oracle_criterion(const ProblemSpec& spec, const Dataset& ds, std::span<const int> idx1,
                                   std::span<const int> idx2, int n) {
  if (idx1.empty() || idx2.empty()) return invalid_score();
  double total = 0.0;
  for (auto idx : {idx1, idx2}) {
    SolveResult r = solve_weighted(spec, ds, WeightedRows::uniform(idx));
    if (!r.ok()) return invalid_score();
    total += static_cast<double>(idx.size()) / n * r.value;
  }
  return make_score(total);
}

/// -1/2 sum_j (n_j/n) h_j^T H0^{-1} h_j using the node's presolved factor of H0.
inline SplitScore apx_risk_unconstrained(const LUFactorization& H0, const VectorXd& h1, const VectorXd& h2, int n1,
                                         int n2, int n) {
  const double v = -0.5 * (static_cast<double>(n1) / n * h1.dot(solve_with(H0, h1)) +
                           static_cast<double>(n2) / n * h2.dot(solve_with(H0, h2)));
  SplitScore s = make_score(v);
  s.regularized = H0.regularized;
  return s;
}

/// Sum_j (1/n) sum_{i in R_j} c(z0 - H0^{-1} h_j; Y_i).
inline SplitScore apx_soln_unconstrained(const LUFactorization& H0, const VectorXd& z0, const VectorXd& h1,
                                         const VectorXd& h2, const ProblemSpec& spec, const Dataset& ds,
                                         std::span<const int> idx1, std::span<const int> idx2, int n) {
  const VectorXd z1 = z0 - solve_with(H0, h1);
  const VectorXd z2 = z0 - solve_with(H0, h2);
  const double v = static_cast<double>(idx1.size()) / n * mean_cost(spec, z1, ds, idx1) +
                   static_cast<double>(idx2.size()) / n * mean_cost(spec, z2, ds, idx2);
  SplitScore s = make_score(v);
  s.regularized = H0.regularized;
  s.d1 = z1 - z0;
  s.d2 = z2 - z0;
  return s;
}

/// First block of the KKT system [[H_L, J^T], [J, 0]] [d; xi] = [-delta_grad; -delta_g; 0].
/// delta_g holds the value differences of the active stochastic rows.
inline VectorXd kkt_direction(const NodeSolution& node, const VectorXd& delta_grad, const VectorXd& delta_g_active) {
  const int dz = node.dz();
  if (!node.constraint_aware) return solve_with(node.kkt, -delta_grad);
  const int m = node.n_active();
  require(delta_grad.size() == dz && delta_g_active.size() == static_cast<Eigen::Index>(node.stoch_active.size()),
          ErrorCode::kDimensionMismatch, "kkt_direction: inconsistent right-hand side");
  VectorXd rhs = VectorXd::Zero(dz + m);
  rhs.head(dz) = -delta_grad;
  rhs.segment(dz, delta_g_active.size()) = -delta_g_active;
  return solve_with(node.kkt, rhs).head(dz);
}

/// The Hessian block actually factored (includes the ridge when it was applied).
inline MatrixXd factored_hessian(const NodeSolution& node) {
  MatrixXd H = node.constraint_aware ? node.H_L : node.H0;
  if (node.kkt.regularized) H += node.kkt.ridge * MatrixXd::Identity(H.rows(), H.cols());
  return H;
}

/// Sum_j p_j (1/2 d_j^T H d_j + d_j^T delta_j) with p_j = n_j / n.
inline SplitScore apx_risk_constrained(const NodeSolution& node, const VectorXd& d1, const VectorXd& d2,
                                       const VectorXd& delta1, const VectorXd& delta2, int n1, int n2, int n) {
  const MatrixXd H = factored_hessian(node);
  auto q = [&](const VectorXd& d, const VectorXd& delta) { return 0.5 * d.dot(H * d) + d.dot(delta); };
  SplitScore s = make_score(static_cast<double>(n1) / n * q(d1, delta1) + static_cast<double>(n2) / n * q(d2, delta2));
  s.regularized = node.kkt.regularized;
  s.d1 = d1;
  s.d2 = d2;
  return s;
}

/// Candidate point z0 + d, projected onto the active affine hull when it drifts off.
inline VectorXd apx_candidate_point(const NodeSolution& node, const VectorXd& d, bool* projected) {
  VectorXd z = node.z0 + d;
  if (node.hull_A.rows() > 0) {
    const double res = (node.hull_A * z - node.hull_b).cwiseAbs().maxCoeff();
    if (res > 1e-8) {
      z = project_affine(z, node.hull_A, node.hull_b);
      if (projected) *projected = true;
    }
  }
  return z;
}

/// Sum_j (1/n) sum_{i in R_j} c(z0 + d_j; Y_i), with affine-hull repair.
inline SplitScore apx_soln_constrained(const NodeSolution& node, const VectorXd& d1, const VectorXd& d2,
                                       const ProblemSpec& spec, const Dataset& ds, std::span<const int> idx1,
                                       std::span<const int> idx2, int n) {
  bool projected = false;
  const VectorXd z1 = apx_candidate_point(node, d1, &projected);
  const VectorXd z2 = apx_candidate_point(node, d2, &projected);
  const double v = static_cast<double>(idx1.size()) / n * mean_cost(spec, z1, ds, idx1) +
                   static_cast<double>(idx2.size()) / n * mean_cost(spec, z2, ds, idx2);
  SplitScore s = make_score(v);
  s.regularized = node.kkt.regularized;
  s.projected = projected;
  s.d1 = z1 - node.z0;
  s.d2 = z2 - node.z0;
  return s;
}

/// Sum_j n_j/(2n) * sum_l biased variance of Y_l within R_j.
inline SplitScore variance_criterion(const Dataset& ds, std::span<const int> idx1, std::span<const int> idx2, int n) {
  if (idx1.empty() || idx2.empty()) return invalid_score();
  double total = 0.0;
  for (auto idx : {idx1, idx2}) {
    VectorXd mean = VectorXd::Zero(ds.d());
    for (int i : idx) mean += ds.Y.row(i).transpose();
    mean /= static_cast<double>(idx.size());
    double ss = 0.0;
    for (int i : idx) ss += (ds.Y.row(i).transpose() - mean).squaredNorm();
    total += ss / (2.0 * n);
  }
  return make_score(total);
}

inline SplitScore random_criterion(Rng& rng) {
  return make_score(boost::random::uniform_real_distribution<double>(0.0, 1.0)(rng));
}

/// Per-node scoring over running side sums. The builder accumulates
/// `row_stats()` rows over the left side of a sorted sweep; the right side is
/// the node total minus the left sums.
class NodeScorer {
 public:
  NodeScorer(const ProblemSpec& spec, const Dataset& ds, Criterion crit, const NodeOutcome* outcome,
             std::span<const int> rows, int n_total)
      : spec_(spec), ds_(ds), crit_(crit), n_(n_total), n0_(static_cast<int>(rows.size())) {
    if (crit_.is_apx()) {
      require(outcome && outcome->solution, ErrorCode::kConfig, "apx criteria need a node solution");
      node_ = &*outcome->solution;
      dz_ = node_->dz();
      ms_ = static_cast<int>(node_->G0.size());
      const int w = dz_ + ms_ + ms_ * dz_;
      stats_.resize(n0_, w);
      stats_.leftCols(dz_) = outcome->contributions;
      if (ms_) {
        stats_.middleCols(dz_, ms_) = outcome->stoch.values;
        stats_.rightCols(ms_ * dz_) = outcome->stoch.gradients;
      }
    } else if (crit_.kind == CriterionKind::kVariance) {
      const int d = ds.d();
      VectorXd mean = VectorXd::Zero(d);
      for (int i : rows) mean += ds.Y.row(i).transpose();
      mean /= static_cast<double>(n0_);
      stats_.resize(n0_, 2 * d);
      for (int k = 0; k < n0_; ++k) {
        const VectorXd c = ds.Y.row(rows[k]).transpose() - mean;
        stats_.row(k).head(d) = c.transpose();
        stats_.row(k).tail(d) = c.cwiseProduct(c).transpose();
      }
    } else {
      stats_.resize(n0_, 0);
    }
    total_ = stats_.colwise().sum().transpose();
  }

  NodeScorer(ProblemSpec&&, const Dataset&, Criterion, const NodeOutcome*, std::span<const int>, int) = delete;
  NodeScorer(const ProblemSpec&, Dataset&&, Criterion, const NodeOutcome*, std::span<const int>, int) = delete;

  /// Per-row statistics aligned with the node's rows (in the order given at construction).
  const RowMatrix& row_stats() const { return stats_; }
  const VectorXd& total() const { return total_; }
  const NodeSolution* node() const { return node_; }

  /// Node impurity recorded for importance accounting.
  double impurity() const {
    switch (crit_.kind) {
      case CriterionKind::kVariance: {
        const int d = ds_.d();
        return crit_.scale * 0.5 * total_.tail(d).sum() / n0_;
      }
      case CriterionKind::kRandom: return 0.0;
      default: return crit_.scale * parent_value_;
    }
  }
  void set_parent_value(double v) { parent_value_ = v; }

  /// Score a split whose left side has running sums `left` over `left_rows`.
  SplitScore score(const VectorXd& left, std::span<const int> left_rows, std::span<const int> right_rows,
                   Rng& rng) const {
    const int n1 = static_cast<int>(left_rows.size()), n2 = static_cast<int>(right_rows.size());
    if (n1 == 0 || n2 == 0) return invalid_score();
    SplitScore s;
    switch (crit_.kind) {
      case CriterionKind::kOracle: s = oracle_criterion(spec_, ds_, left_rows, right_rows, n_); break;
      case CriterionKind::kRandom: s = random_criterion(rng); break;
      case CriterionKind::kVariance: {
        const int d = ds_.d();
        const VectorXd right = total_ - left;
        auto piece = [&](const VectorXd& sums, int nj) {
          return sums.tail(d).sum() - sums.head(d).squaredNorm() / nj;
        };
        s = make_score((piece(left, n1) + piece(right, n2)) / (2.0 * n_));
        break;
      }
      default: s = score_apx(left, total_ - left, left_rows, right_rows); break;
    }
    if (s.valid) s.value *= crit_.scale;
    return s;
  }

  /// Gradient estimate, direction and linear-term vector for one side.
  struct SideTerms {
    VectorXd h, delta, d;
  };
  SideTerms side_terms(const VectorXd& sums, int nj) const {
    SideTerms t;
    t.h = sums.head(dz_) / nj;
    if (!crit_.constraint_aware) {
      t.delta = t.h;
      t.d = solve_with(node_->kkt, -t.h);
      return t;
    }
    t.delta = t.h - node_->grad_f0;
    for (int c = 0; c < ms_; ++c) {
      const double lam = node_->stoch_lambda[c];
      if (lam == 0.0) continue;
      const VectorXd gj = sums.segment(dz_ + ms_ + c * dz_, dz_) / nj;
      t.delta += lam * (gj - node_->dG0.row(c).transpose());
    }
    VectorXd dg(node_->stoch_active.size());
    for (size_t k = 0; k < node_->stoch_active.size(); ++k) {
      const int c = node_->stoch_active[k];
      dg[k] = sums[dz_ + c] / nj - node_->G0[c];
    }
    t.d = kkt_direction(*node_, t.delta, dg);
    return t;
  }

 private:
  SplitScore score_apx(const VectorXd& left, const VectorXd& right, std::span<const int> left_rows,
                       std::span<const int> right_rows) const {
    const int n1 = static_cast<int>(left_rows.size()), n2 = static_cast<int>(right_rows.size());
    const SideTerms a = side_terms(left, n1), b = side_terms(right, n2);
    if (crit_.kind == CriterionKind::kApxRisk) {
      if (!crit_.constraint_aware) return apx_risk_unconstrained(node_->kkt, a.h, b.h, n1, n2, n_);
      return apx_risk_constrained(*node_, a.d, b.d, a.delta, b.delta, n1, n2, n_);
    }
    if (!crit_.constraint_aware)
      return apx_soln_unconstrained(node_->kkt, node_->z0, a.h, b.h, spec_, ds_, left_rows, right_rows, n_);
    return apx_soln_constrained(*node_, a.d, b.d, spec_, ds_, left_rows, right_rows, n_);
  }

  const ProblemSpec& spec_;
  const Dataset& ds_;
  Criterion crit_;
  int n_;
  int n0_;
  const NodeSolution* node_ = nullptr;
  int dz_ = 0, ms_ = 0;
  RowMatrix stats_;
  VectorXd total_;
  double parent_value_ = 0.0;
};

}  // namespace sof
