// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "sof/error.hpp"
#include "sof/linalg.hpp"
#include "sof/lp.hpp"

namespace sof {

/// Duals follow Q z + c + A_eq^T nu + A_ub^T lambda = 0, lambda >= 0.
struct QPResult {
  LPStatus status = LPStatus::kInfeasible;
  VectorXd z;
  double objective = 0.0;
  VectorXd eq_duals;
  VectorXd ub_duals;
  int iterations = 0;
};

/// min 1/2 z^T Q z + c^T z s.t. A_eq z = b_eq, A_ub z <= b_ub (primal active set).
inline QPResult qp_solve(const MatrixXd& Q_in, const VectorXd& c, const MatrixXd& A_eq, const VectorXd& b_eq,
                         const MatrixXd& A_ub, const VectorXd& b_ub) {
  const int n = static_cast<int>(c.size());
  const int me = static_cast<int>(A_eq.rows()), mu = static_cast<int>(A_ub.rows());
  require(Q_in.rows() == n && Q_in.cols() == n && (me == 0 || A_eq.cols() == n) && (mu == 0 || A_ub.cols() == n) &&
              b_eq.size() == me && b_ub.size() == mu,
          ErrorCode::kDimensionMismatch, "qp_solve: inconsistent dimensions");
  require(Q_in.allFinite() && c.allFinite(), ErrorCode::kNonFinite, "qp_solve: non-finite data");
  const MatrixXd Q = 0.5 * (Q_in + Q_in.transpose());
  const double qnorm = Q.cwiseAbs().maxCoeff();
  if (n > 0) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Q, Eigen::EigenvaluesOnly);
    require(es.eigenvalues().minCoeff() >= -1e-8 * std::max(qnorm, 1e-300) || qnorm == 0.0, ErrorCode::kNotPSD,
            "qp_solve: Q is not positive semidefinite");
  }
  QPResult res;
  // Feasible start from an LP with zero objective.
  LPResult start = lp_solve(VectorXd::Zero(n), A_eq, b_eq, A_ub, b_ub, VectorXd::Constant(n, -kInf));
  if (start.status != LPStatus::kOptimal) {
    res.status = LPStatus::kInfeasible;
    return res;
  }
  VectorXd z = start.z;
  std::vector<int> work;  // indices into A_ub rows
  MatrixXd Aw(me, n);
  if (me) Aw = A_eq;
  auto rebuild = [&]() {
    Aw.resize(me + static_cast<int>(work.size()), n);
    if (me) Aw.topRows(me) = A_eq;
    for (size_t k = 0; k < work.size(); ++k) Aw.row(me + k) = A_ub.row(work[k]);
  };
  auto independent_of_work = [&](int row) {
    MatrixXd trial(Aw.rows() + 1, n);
    trial << Aw, A_ub.row(row);
    auto keep = independent_rows(trial);
    return !keep.empty() && keep.back() == trial.rows() - 1;
  };
  for (int k = 0; k < mu; ++k) {
    if (std::abs(A_ub.row(k).dot(z) - b_ub[k]) <= 1e-9 * (1.0 + std::abs(b_ub[k])) && independent_of_work(k)) {
      work.push_back(k);
      rebuild();
    }
  }
  const int max_iter = 50 * (n + mu + me) + 100;
  VectorXd lam_w;
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    const VectorXd g = Q * z + c;
    MatrixXd Z;
    if (Aw.rows() == 0) {
      Z = MatrixXd::Identity(n, n);
    } else {
      Eigen::JacobiSVD<MatrixXd> svd(Aw, Eigen::ComputeFullV);
      const auto& sv = svd.singularValues();
      int rank = 0;
      for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > 1e-10 * std::max(1.0, sv[0])) ++rank;
      Z = svd.matrixV().rightCols(n - rank);
    }
    VectorXd p = VectorXd::Zero(n);
    bool ray = false;
    if (Z.cols() > 0) {
      const MatrixXd Hr = Z.transpose() * Q * Z;
      const VectorXd gr = Z.transpose() * g;
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(Hr);
      const VectorXd& ev = es.eigenvalues();
      const MatrixXd& V = es.eigenvectors();
      const double etol = 1e-10 * std::max(1.0, qnorm);
      VectorXd flat = VectorXd::Zero(Z.cols());
      for (int k = 0; k < ev.size(); ++k) {
        const double comp = V.col(k).dot(gr);
        if (ev[k] <= etol && std::abs(comp) > 1e-12 * std::max(1.0, g.norm())) flat -= comp * V.col(k);
      }
      if (flat.norm() > 0) {
        p = Z * flat;
        ray = true;
      } else {
        VectorXd pr = VectorXd::Zero(Z.cols());
        for (int k = 0; k < ev.size(); ++k)
          if (ev[k] > etol) pr -= (V.col(k).dot(gr) / ev[k]) * V.col(k);
        p = Z * pr;
      }
    }
    if (p.norm() <= 1e-12 * std::max(1.0, z.norm())) {
      // Multipliers from stationarity g + Aw^T lam = 0.
      lam_w = Aw.rows() ? VectorXd(Aw.transpose().completeOrthogonalDecomposition().solve(-g)) : VectorXd(0);
      int drop = -1;
      double most_neg = -1e-10 * std::max(1.0, g.norm());
      for (size_t k = 0; k < work.size(); ++k) {
        if (lam_w[me + k] < most_neg) {
          most_neg = lam_w[me + k];
          drop = static_cast<int>(k);
        }
      }
      if (drop < 0) {
        res.status = LPStatus::kOptimal;
        break;
      }
      work.erase(work.begin() + drop);
      rebuild();
      continue;
    }
    double step = ray ? kInf : 1.0;
    int block = -1;
    for (int k = 0; k < mu; ++k) {
      if (std::find(work.begin(), work.end(), k) != work.end()) continue;
      const double ap = A_ub.row(k).dot(p);
      if (ap <= 1e-14 * p.norm()) continue;
      const double slack = std::max(0.0, b_ub[k] - A_ub.row(k).dot(z));
      const double t = slack / ap;
      if (t < step) {
        step = t;
        block = k;
      }
    }
    if (!std::isfinite(step)) {
      res.status = LPStatus::kUnbounded;
      return res;
    }
    z += step * p;
    if (block >= 0 && independent_of_work(block)) {
      work.push_back(block);
      rebuild();
    }
  }
  if (res.status != LPStatus::kOptimal) {
    res.status = LPStatus::kIterationLimit;
    return res;
  }
  res.z = z;
  res.objective = 0.5 * z.dot(Q * z) + c.dot(z);
  res.eq_duals = lam_w.head(me);
  res.ub_duals = VectorXd::Zero(mu);
  for (size_t k = 0; k < work.size(); ++k) res.ub_duals[work[k]] = std::max(0.0, lam_w[me + k]);
  return res;
}

}  // namespace sof
