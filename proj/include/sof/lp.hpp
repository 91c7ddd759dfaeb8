// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "sof/error.hpp"

namespace sof {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class LPStatus { kOptimal, kInfeasible, kUnbounded, kIterationLimit };

inline const char* to_string(LPStatus s) {
  switch (s) {
    case LPStatus::kOptimal: return "optimal";
    case LPStatus::kInfeasible: return "infeasible";
    case LPStatus::kUnbounded: return "unbounded";
    case LPStatus::kIterationLimit: return "iteration_limit";
  }
  return "unknown";
}

/// Result of min c^T x s.t. A x = b, l <= x <= u. `row_duals` y satisfy
/// c - A^T y = reduced_costs, with reduced costs of the sign implied by the
/// bound each nonbasic variable sits at.
struct StandardLPResult {
  LPStatus status = LPStatus::kInfeasible;
  VectorXd x;
  double objective = 0.0;
  VectorXd row_duals;
  int iterations = 0;
};

struct SimplexOptions {
  double feas_tol = 1e-9;
  double opt_tol = 1e-10;
  double pivot_tol = 1e-11;
  int refactor_every = 64;
  int bland_after = 50;
  int max_iterations = 0;  // 0: 20 * (m + n) + 1000
};

/// Dense bounded-variable revised simplex (two phases, artificial start).
/// Dantzig pricing, switching to Bland's rule while pivots stay degenerate.
class BoundedSimplex {
 public:
  BoundedSimplex(const MatrixXd& A, const VectorXd& b, const VectorXd& c, const VectorXd& lower,
                 const VectorXd& upper, SimplexOptions opt = SimplexOptions())
      : A_(A), b_(b), c_(c), lo_(lower), up_(upper), opt_(opt) {
    m_ = static_cast<int>(A.rows());
    n_ = static_cast<int>(A.cols());
    require(b.size() == m_ && c.size() == n_ && lower.size() == n_ && upper.size() == n_,
            ErrorCode::kDimensionMismatch, "simplex: inconsistent dimensions");
    require(A.allFinite() && b.allFinite() && c.allFinite(), ErrorCode::kNonFinite, "simplex: non-finite data");
  }

  /// Optional starting values for nonbasic structural variables (clamped to bounds).
  void set_start(const VectorXd& x0) { start_ = x0; }

  StandardLPResult solve() {
    StandardLPResult res;
    for (int j = 0; j < n_; ++j)
      if (lo_[j] > up_[j] + opt_.feas_tol) {
        res.status = LPStatus::kInfeasible;
        return res;
      }
    const int total = n_ + m_;
    lo_full_.resize(total);
    up_full_.resize(total);
    x_.resize(total);
    state_.assign(total, State::kLower);
    lo_full_.head(n_) = lo_;
    up_full_.head(n_) = up_;
    for (int j = 0; j < n_; ++j) {
      double v;
      if (start_ && std::isfinite((*start_)[j])) {
        v = std::clamp((*start_)[j], lo_[j], up_[j]);
      } else if (std::isfinite(lo_[j])) {
        v = lo_[j];
      } else if (std::isfinite(up_[j])) {
        v = up_[j];
      } else {
        v = 0.0;
      }
      x_[j] = v;
      if (std::isfinite(lo_[j]) && v == lo_[j])
        state_[j] = State::kLower;
      else if (std::isfinite(up_[j]) && v == up_[j])
        state_[j] = State::kUpper;
      else
        state_[j] = State::kFree;
    }
    VectorXd r = b_ - A_ * x_.head(n_);
    art_sign_.resize(m_);
    basis_.resize(m_);
    for (int i = 0; i < m_; ++i) {
      art_sign_[i] = r[i] >= 0 ? 1.0 : -1.0;
      const int a = n_ + i;
      lo_full_[a] = 0.0;
      up_full_[a] = kInf;
      x_[a] = std::abs(r[i]);
      state_[a] = State::kBasic;
      basis_[i] = a;
    }
    Binv_ = MatrixXd::Zero(m_, m_);
    for (int i = 0; i < m_; ++i) Binv_(i, i) = art_sign_[i];
    max_iter_ = opt_.max_iterations > 0 ? opt_.max_iterations : 20 * (m_ + n_) + 1000;

    // Phase I: minimise the sum of artificials.
    VectorXd cost1 = VectorXd::Zero(total);
    cost1.tail(m_).setOnes();
    LPStatus st = iterate(cost1);
    res.iterations = iters_;
    if (st == LPStatus::kIterationLimit) {
      res.status = st;
      return res;
    }
    double infeas = x_.tail(m_).sum();
    if (infeas > opt_.feas_tol * 100 * (1.0 + b_.cwiseAbs().maxCoeff())) {
      res.status = LPStatus::kInfeasible;
      return res;
    }
    drive_out_artificials();
    for (int i = 0; i < m_; ++i) {
      up_full_[n_ + i] = 0.0;
      if (state_[n_ + i] != State::kBasic) {
        x_[n_ + i] = 0.0;
        state_[n_ + i] = State::kLower;
      }
    }
    VectorXd cost2 = VectorXd::Zero(total);
    cost2.head(n_) = c_;
    st = iterate(cost2);
    res.iterations = iters_;
    if (st != LPStatus::kOptimal) {
      res.status = st;
      return res;
    }
    refactor();
    res.status = LPStatus::kOptimal;
    res.x = x_.head(n_);
    res.objective = c_.dot(res.x);
    VectorXd cb(m_);
    for (int i = 0; i < m_; ++i) cb[i] = cost2[basis_[i]];
    res.row_duals = Binv_.transpose() * cb;
    return res;
  }

 private:
  enum class State { kBasic, kLower, kUpper, kFree };

  double col_dot(const VectorXd& y, int j) const {
    if (j < n_) return y.dot(A_.col(j));
    return y[j - n_] * art_sign_[j - n_];
  }
  VectorXd column(int j) const {
    if (j < n_) return A_.col(j);
    VectorXd e = VectorXd::Zero(m_);
    e[j - n_] = art_sign_[j - n_];
    return e;
  }

  void refactor() {
    if (m_ == 0) return;
    MatrixXd B(m_, m_);
    for (int i = 0; i < m_; ++i) B.col(i) = column(basis_[i]);
    Eigen::PartialPivLU<MatrixXd> lu(B);
    Binv_ = lu.inverse();
    VectorXd rhs = b_;
    for (int j = 0; j < n_ + m_; ++j)
      if (state_[j] != State::kBasic && x_[j] != 0.0) rhs -= column(j) * x_[j];
    VectorXd xb = Binv_ * rhs;
    for (int i = 0; i < m_; ++i) x_[basis_[i]] = xb[i];
  }

  void pivot(int r, const VectorXd& alpha) {
    const double ar = alpha[r];
    Binv_.row(r) /= ar;
    for (int i = 0; i < m_; ++i)
      if (i != r && alpha[i] != 0.0) Binv_.row(i) -= alpha[i] * Binv_.row(r);
  }

  void drive_out_artificials() {
    for (int r = 0; r < m_; ++r) {
      if (basis_[r] < n_) continue;
      VectorXd row = Binv_.row(r).transpose();
      int best = -1;
      double bestv = 1e-9;
      for (int j = 0; j < n_; ++j) {
        if (state_[j] == State::kBasic) continue;
        double v = std::abs(row.dot(A_.col(j)));
        if (v > bestv) {
          bestv = v;
          best = j;
        }
      }
      if (best < 0) continue;  // redundant row; artificial stays basic at zero
      VectorXd alpha = Binv_ * A_.col(best);
      const int leaving = basis_[r];
      pivot(r, alpha);
      basis_[r] = best;
      state_[best] = State::kBasic;
      state_[leaving] = State::kLower;
      x_[leaving] = 0.0;
      refactor();
    }
  }

  LPStatus iterate(const VectorXd& cost) {
    const int total = n_ + m_;
    int degenerate_run = 0;
    bool bland = false;
    int since_refactor = 0;
    VectorXd cb(m_);
    while (true) {
      if (iters_ >= max_iter_) return LPStatus::kIterationLimit;
      if (since_refactor >= opt_.refactor_every) {
        refactor();
        since_refactor = 0;
      }
      for (int i = 0; i < m_; ++i) cb[i] = cost[basis_[i]];
      VectorXd y = Binv_.transpose() * cb;
      int q = -1;
      double best = 0.0, dq = 0.0;
      for (int j = 0; j < total; ++j) {
        const State s = state_[j];
        if (s == State::kBasic) continue;
        if (lo_full_[j] == up_full_[j]) continue;
        const double d = cost[j] - col_dot(y, j);
        bool eligible = ((s == State::kLower || s == State::kFree) && d < -opt_.opt_tol) ||
                        ((s == State::kUpper || s == State::kFree) && d > opt_.opt_tol);
        if (!eligible) continue;
        if (bland) {
          q = j;
          dq = d;
          break;
        }
        if (std::abs(d) > best) {
          best = std::abs(d);
          q = j;
          dq = d;
        }
      }
      if (q < 0) return LPStatus::kOptimal;
      ++iters_;
      ++since_refactor;
      const double dir = dq < 0 ? 1.0 : -1.0;
      VectorXd alpha = Binv_ * column(q);
      // Basic variable i changes at rate -dir * alpha_i per unit step.
      double theta = kInf;
      int leave = -1;
      double leave_piv = 0.0;
      for (int i = 0; i < m_; ++i) {
        const double rate = -dir * alpha[i];
        if (std::abs(alpha[i]) <= opt_.pivot_tol) continue;
        const int bi = basis_[i];
        double t;
        if (rate < 0) {
          if (!std::isfinite(lo_full_[bi])) continue;
          t = std::max(0.0, (x_[bi] - lo_full_[bi]) / -rate);
        } else {
          if (!std::isfinite(up_full_[bi])) continue;
          t = std::max(0.0, (up_full_[bi] - x_[bi]) / rate);
        }
        const bool better = bland ? (t < theta - 1e-12 || (t <= theta + 1e-12 && leave >= 0 && bi < basis_[leave]))
                                  : (t < theta - 1e-12 || (t <= theta + 1e-12 && std::abs(alpha[i]) > leave_piv));
        if (leave < 0 ? t < kInf : better) {
          theta = t;
          leave = i;
          leave_piv = std::abs(alpha[i]);
        }
      }
      const double span = up_full_[q] - lo_full_[q];
      if (std::isfinite(span) && span <= theta) {
        // Bound flip: entering variable moves to its other bound.
        x_[q] += dir * span;
        for (int i = 0; i < m_; ++i) x_[basis_[i]] -= dir * span * alpha[i];
        state_[q] = dir > 0 ? State::kUpper : State::kLower;
        x_[q] = dir > 0 ? up_full_[q] : lo_full_[q];
        degenerate_run = 0;
        bland = false;
        continue;
      }
      if (leave < 0) return LPStatus::kUnbounded;
      for (int i = 0; i < m_; ++i) x_[basis_[i]] -= dir * theta * alpha[i];
      x_[q] += dir * theta;
      const int out = basis_[leave];
      const double rate_out = -dir * alpha[leave];
      if (rate_out < 0) {
        x_[out] = lo_full_[out];
        state_[out] = State::kLower;
      } else {
        x_[out] = up_full_[out];
        state_[out] = State::kUpper;
      }
      pivot(leave, alpha);
      basis_[leave] = q;
      state_[q] = State::kBasic;
      if (theta <= 1e-12) {
        if (++degenerate_run > opt_.bland_after) bland = true;
      } else {
        degenerate_run = 0;
        bland = false;
      }
    }
  }

  MatrixXd A_;
  VectorXd b_, c_, lo_, up_;
  SimplexOptions opt_;
  std::optional<VectorXd> start_;
  int m_ = 0, n_ = 0;
  VectorXd lo_full_, up_full_, x_;
  std::vector<State> state_;
  std::vector<double> art_sign_;
  std::vector<int> basis_;
  MatrixXd Binv_;
  int iters_ = 0;
  int max_iter_ = 0;
};

/// LP in inequality form. Duals follow c + A_eq^T nu + A_ub^T lambda - mu = 0
/// with lambda >= 0 and mu >= 0 on finite lower bounds.
struct LPResult {
  LPStatus status = LPStatus::kInfeasible;
  VectorXd z;
  double objective = 0.0;
  VectorXd eq_duals;
  VectorXd ub_duals;
  int iterations = 0;
};

/// min c^T z s.t. A_eq z = b_eq, A_ub z <= b_ub, z >= lower (entries may be -inf).
inline LPResult lp_solve(const VectorXd& c, const MatrixXd& A_eq, const VectorXd& b_eq, const MatrixXd& A_ub,
                         const VectorXd& b_ub, const VectorXd& lower, const VectorXd* start = nullptr) {
  const int n = static_cast<int>(c.size());
  const int me = static_cast<int>(A_eq.rows()), mu = static_cast<int>(A_ub.rows());
  require((me == 0 || A_eq.cols() == n) && (mu == 0 || A_ub.cols() == n) && b_eq.size() == me &&
              b_ub.size() == mu && lower.size() == n,
          ErrorCode::kDimensionMismatch, "lp_solve: inconsistent dimensions");
  MatrixXd A = MatrixXd::Zero(me + mu, n + mu);
  if (me) A.topLeftCorner(me, n) = A_eq;
  if (mu) {
    A.bottomLeftCorner(mu, n) = A_ub;
    A.bottomRightCorner(mu, mu).setIdentity();
  }
  VectorXd b(me + mu);
  b << b_eq, b_ub;
  VectorXd cc = VectorXd::Zero(n + mu);
  cc.head(n) = c;
  VectorXd lo(n + mu), up = VectorXd::Constant(n + mu, kInf);
  lo.head(n) = lower;
  lo.tail(mu).setZero();
  BoundedSimplex simplex(A, b, cc, lo, up);
  if (start) {
    VectorXd s(n + mu);
    s.head(n) = *start;
    s.tail(mu) = mu ? VectorXd(b_ub - A_ub * *start) : VectorXd(0);
    simplex.set_start(s);
  }
  StandardLPResult sr = simplex.solve();
  LPResult res;
  res.status = sr.status;
  res.iterations = sr.iterations;
  if (sr.status != LPStatus::kOptimal) return res;
  res.z = sr.x.head(n);
  res.objective = c.dot(res.z);
  res.eq_duals = -sr.row_duals.head(me);
  res.ub_duals = (-sr.row_duals.tail(mu)).cwiseMax(0.0);
  return res;
}

/// min c^T x + sum_r a_r max(0, g_r^T x + e_r) s.t. A_eq x = b_eq, A_ub x <= b_ub,
/// with x free and a_r >= 0. Rows of G are g_r.
struct HingeLP {
  VectorXd c;
  MatrixXd G;
  VectorXd e;
  VectorXd a;
  MatrixXd A_eq;
  VectorXd b_eq;
  MatrixXd A_ub;
  VectorXd b_ub;

  double objective(const VectorXd& x) const {
    VectorXd s = (G * x + e).cwiseMax(0.0);
    return c.dot(x) + a.dot(s);
  }
};

/// Duals follow c + sum_r pi_r g_r + A_eq^T nu + A_ub^T lambda = 0.
struct HingeLPResult {
  LPStatus status = LPStatus::kInfeasible;
  VectorXd x;
  double objective = 0.0;
  VectorXd eq_duals;
  VectorXd ub_duals;
  VectorXd hinge_duals;  // pi_r in [0, a_r]
  int iterations = 0;
  bool used_dual_route = false;
};

/// Epigraph route: variables (x, u) with u_r >= g_r^T x + e_r, u >= 0.
inline HingeLPResult hinge_lp_primal(const HingeLP& p) {
  const int nx = static_cast<int>(p.c.size()), R = static_cast<int>(p.G.rows());
  const int mu = static_cast<int>(p.A_ub.rows());
  VectorXd c(nx + R);
  c << p.c, p.a;
  MatrixXd Aeq = MatrixXd::Zero(p.A_eq.rows(), nx + R);
  if (p.A_eq.rows()) Aeq.leftCols(nx) = p.A_eq;
  MatrixXd Aub = MatrixXd::Zero(R + mu, nx + R);
  VectorXd bub(R + mu);
  if (R) {
    Aub.topLeftCorner(R, nx) = p.G;
    Aub.block(0, nx, R, R) = -MatrixXd::Identity(R, R);
    bub.head(R) = -p.e;
  }
  if (mu) {
    Aub.bottomLeftCorner(mu, nx) = p.A_ub;
    bub.tail(mu) = p.b_ub;
  }
  VectorXd lower(nx + R);
  lower.head(nx).setConstant(-kInf);
  lower.tail(R).setZero();
  LPResult lp = lp_solve(c, Aeq, p.b_eq, Aub, bub, lower);
  HingeLPResult res;
  res.status = lp.status;
  res.iterations = lp.iterations;
  if (lp.status != LPStatus::kOptimal) return res;
  res.x = lp.z.head(nx);
  res.objective = p.objective(res.x);
  res.eq_duals = lp.eq_duals;
  res.ub_duals = lp.ub_duals.tail(mu);
  res.hinge_duals = lp.ub_duals.head(R);
  return res;
}

/// Dual route: one equality row per primal variable, one bounded column per
/// hinge term. The primal point is read off the simplex row duals (x = -y).
/// `guess` (optional) crashes hinge duals to their upper bound where the
/// hinge is positive at the guess. Falls back to the epigraph route if the
/// recovered primal fails the feasibility or duality-gap checks.
inline HingeLPResult hinge_lp_solve(const HingeLP& p, const VectorXd* guess = nullptr);

namespace detail {
inline HingeLPResult hinge_lp_direct(const HingeLP& p, const VectorXd* guess, bool epigraph_fallback = true);
}

namespace detail {

inline constexpr int kHingeWorkingSetThreshold = 4000;

// Large instances: hinge terms far from their kink are frozen as linear (on)
// or dropped (off), and only rows near the kink stay as hinges. The frozen
// model lower-bounds the true objective and agrees with it wherever the
// frozen signs hold. Each reduced model is solved inside an infinity-norm box
// around the current centre; an optimum strictly inside the box whose frozen
// signs check out is a global optimum of the full problem.
inline std::optional<HingeLPResult> hinge_lp_working_set(const HingeLP& p) {
  const int nx = static_cast<int>(p.c.size()), R = static_cast<int>(p.G.rows());
  const int stride = (R + 999) / 1000;
  std::vector<int> sub;
  for (int r = 0; r < R; r += stride) sub.push_back(r);
  HingeLP small = p;
  small.G.resize(sub.size(), nx);
  small.e.resize(sub.size());
  small.a.resize(sub.size());
  double a_sub = 0.0;
  for (size_t k = 0; k < sub.size(); ++k) {
    small.G.row(k) = p.G.row(sub[k]);
    small.e[k] = p.e[sub[k]];
    small.a[k] = p.a[sub[k]];
    a_sub += small.a[k];
  }
  if (a_sub <= 0) return std::nullopt;
  small.a *= p.a.sum() / a_sub;
  HingeLPResult guess = hinge_lp_direct(small, nullptr);
  if (guess.status != LPStatus::kOptimal) return std::nullopt;
  VectorXd h = p.G * guess.x + p.e;
  std::vector<double> mags(R);
  int keep = std::min(R, std::max(400, R / 25));
  // 1 = on (linear), 0 = off, 2 = hinge.
  std::vector<char> cls(R);
  double tau = 0.0;
  auto classify = [&]() {
    for (int r = 0; r < R; ++r) mags[r] = std::abs(h[r]);
    std::vector<double> tmp = mags;
    std::nth_element(tmp.begin(), tmp.begin() + (keep - 1), tmp.end());
    tau = tmp[keep - 1];
    for (int r = 0; r < R; ++r) cls[r] = mags[r] <= tau ? 2 : (h[r] > 0 ? 1 : 0);
  };
  classify();
  // Initial radius: no frozen row can change sign inside the box.
  const double g_max = p.G.rowwise().lpNorm<1>().maxCoeff();
  double radius = g_max > 0 ? std::max(tau / g_max, 1e-6) : 1.0;
  const int mu = static_cast<int>(p.A_ub.rows());
  int total_iters = guess.iterations;
  VectorXd x = guess.x;
  for (int round = 0; round < 100; ++round) {
    HingeLP red = p;
    std::vector<int> mid;
    for (int r = 0; r < R; ++r) {
      if (cls[r] == 1) red.c += p.a[r] * p.G.row(r).transpose();
      if (cls[r] == 2) mid.push_back(r);
    }
    red.G.resize(mid.size(), nx);
    red.e.resize(mid.size());
    red.a.resize(mid.size());
    for (size_t k = 0; k < mid.size(); ++k) {
      red.G.row(k) = p.G.row(mid[k]);
      red.e[k] = p.e[mid[k]];
      red.a[k] = p.a[mid[k]];
    }
    red.A_ub.conservativeResize(mu + 2 * nx, nx);
    red.b_ub.conservativeResize(mu + 2 * nx);
    red.A_ub.bottomRows(2 * nx) << MatrixXd::Identity(nx, nx), -MatrixXd::Identity(nx, nx);
    red.b_ub.segment(mu, nx) = x.array() + radius;
    red.b_ub.tail(nx) = radius - x.array();
    // Reduced models are solved directly; recursing can freeze a hinge set
    // whose lower-bound model is unbounded.
    HingeLPResult rr = hinge_lp_direct(red, &x, false);
    total_iters += rr.iterations;
    if (rr.status != LPStatus::kOptimal) {
      if (keep >= R) return std::nullopt;
      keep = std::min(R, 2 * keep);
      h = p.G * x + p.e;
      classify();
      continue;
    }
    const bool on_box = ((rr.x - x).cwiseAbs().array() >= radius * (1.0 - 1e-9)).any();
    h = p.G * rr.x + p.e;
    const double tol = 1e-12 * (1.0 + h.cwiseAbs().maxCoeff());
    int violations = 0;
    for (int r = 0; r < R; ++r) {
      if ((cls[r] == 1 && h[r] < -tol) || (cls[r] == 0 && h[r] > tol)) {
        cls[r] = 2;
        ++violations;
      }
    }
    // Sign violations refine the model at the same centre. An exact step that
    // hits the box moves the centre (the objective cannot increase) and grows
    // the radius.
    if (violations > 0) continue;
    if (on_box) {
      x = rr.x;
      radius *= 2.0;
      if (static_cast<int>(mid.size()) > 4 * keep) classify();
      continue;
    }
    rr.ub_duals.conservativeResize(mu);
    VectorXd pi = VectorXd::Zero(R);
    for (int r = 0; r < R; ++r)
      if (cls[r] == 1) pi[r] = p.a[r];
    for (size_t k = 0; k < mid.size(); ++k) pi[mid[k]] = rr.hinge_duals[k];
    rr.hinge_duals = std::move(pi);
    rr.objective = p.objective(rr.x);
    rr.iterations = total_iters;
    return rr;
  }
  return std::nullopt;
}

}  // namespace detail

inline HingeLPResult hinge_lp_solve(const HingeLP& p, const VectorXd* guess) {
  if (p.G.rows() > detail::kHingeWorkingSetThreshold) {
    if (auto ws = detail::hinge_lp_working_set(p)) return *ws;
  }
  return detail::hinge_lp_direct(p, guess);
}

namespace detail {

inline HingeLPResult hinge_lp_direct(const HingeLP& p, const VectorXd* guess, bool epigraph_fallback) {
  const int nx = static_cast<int>(p.c.size()), R = static_cast<int>(p.G.rows());
  const int me = static_cast<int>(p.A_eq.rows()), mu = static_cast<int>(p.A_ub.rows());
  require(p.G.cols() == nx || R == 0, ErrorCode::kDimensionMismatch, "hinge LP: G has wrong width");
  require(p.e.size() == R && p.a.size() == R, ErrorCode::kDimensionMismatch, "hinge LP: e/a length");
  const int N = R + me + mu;
  MatrixXd M(nx, N);
  if (R) M.leftCols(R) = -p.G.transpose();
  if (me) M.middleCols(R, me) = p.A_eq.transpose();
  if (mu) M.rightCols(mu) = -p.A_ub.transpose();
  VectorXd cost(N), lo(N), up(N);
  if (R) {
    cost.head(R) = -p.e;
    lo.head(R).setZero();
    up.head(R) = p.a;
  }
  if (me) {
    cost.segment(R, me) = -p.b_eq;
    lo.segment(R, me).setConstant(-kInf);
    up.segment(R, me).setConstant(kInf);
  }
  if (mu) {
    cost.tail(mu) = p.b_ub;
    lo.tail(mu).setZero();
    up.tail(mu).setConstant(kInf);
  }
  BoundedSimplex simplex(M, p.c, cost, lo, up);
  if (guess && R) {
    VectorXd s = VectorXd::Constant(N, std::numeric_limits<double>::quiet_NaN());
    VectorXd h = p.G * *guess + p.e;
    for (int r = 0; r < R; ++r) s[r] = h[r] > 0 ? p.a[r] : 0.0;
    simplex.set_start(s);
  }
  StandardLPResult sr = simplex.solve();
  HingeLPResult res;
  res.iterations = sr.iterations;
  if (sr.status == LPStatus::kOptimal) {
    VectorXd x = -sr.row_duals;
    const double scale = 1.0 + p.b_eq.cwiseAbs().sum() + p.b_ub.cwiseAbs().sum();
    bool feasible = true;
    if (me) feasible = feasible && (p.A_eq * x - p.b_eq).cwiseAbs().maxCoeff() <= 1e-7 * scale;
    if (mu) feasible = feasible && (p.A_ub * x - p.b_ub).maxCoeff() <= 1e-7 * scale;
    const double primal = p.objective(x);
    const double dual = -sr.objective;
    if (feasible && std::abs(primal - dual) <= 1e-7 * (1.0 + std::abs(dual))) {
      res.status = LPStatus::kOptimal;
      res.x = x;
      res.objective = primal;
      res.eq_duals = -sr.x.segment(R, me);
      res.ub_duals = sr.x.tail(mu);
      res.hinge_duals = sr.x.head(R);
      res.used_dual_route = true;
      return res;
    }
  } else if (sr.status == LPStatus::kUnbounded) {
    res.status = LPStatus::kInfeasible;
    return res;
  } else if (sr.status == LPStatus::kInfeasible) {
    // Dual infeasible: the primal is unbounded or infeasible; let the epigraph route decide.
  }
  if (!epigraph_fallback) {
    res.status = LPStatus::kIterationLimit;
    return res;
  }
  HingeLPResult fallback = hinge_lp_primal(p);
  fallback.iterations += res.iterations;
  return fallback;
}

}  // namespace detail

}  // namespace sof
