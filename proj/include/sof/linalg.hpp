// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "sof/error.hpp"

namespace sof {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Relative pivot threshold below which a factorisation is treated as singular.
inline constexpr double kPivotRelTol = 1e-12;

/// LU factors of P*A = L*U (or of A + ridge*I when `regularized`).
struct LUFactorization {
  MatrixXd lu;
  std::vector<int> perm;  // row i of P*A is row perm[i] of A
  bool regularized = false;
  double ridge = 0.0;

  int dim() const { return static_cast<int>(lu.rows()); }
};

namespace detail {

inline double inf_norm(const MatrixXd& A) {
  return A.rows() == 0 ? 0.0 : A.cwiseAbs().rowwise().sum().maxCoeff();
}

// Returns false when a pivot falls below `tol`.
inline bool lu_in_place(MatrixXd& a, std::vector<int>& perm, double tol) {
  const int n = static_cast<int>(a.rows());
  perm.resize(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int k = 0; k < n; ++k) {
    int piv = k;
    double best = std::abs(a(k, k));
    for (int i = k + 1; i < n; ++i) {
      if (std::abs(a(i, k)) > best) {
        best = std::abs(a(i, k));
        piv = i;
      }
    }
    if (!(best > tol)) return false;
    if (piv != k) {
      a.row(k).swap(a.row(piv));
      std::swap(perm[k], perm[piv]);
    }
    const double inv = 1.0 / a(k, k);
    for (int i = k + 1; i < n; ++i) {
      double l = a(i, k) * inv;
      a(i, k) = l;
      if (l != 0.0) a.row(i).tail(n - k - 1) -= l * a.row(k).tail(n - k - 1);
    }
  }
  return true;
}

}  // namespace detail

/// LU with partial pivoting. If a pivot is below 1e-12*||A||_inf the matrix
/// A + eps*I is factored instead and the result is flagged.
inline LUFactorization lu_factor(const MatrixXd& A, double eps = 1e-3) {
  require(A.rows() == A.cols(), ErrorCode::kDimensionMismatch, "lu_factor needs a square matrix");
  require(A.allFinite(), ErrorCode::kNonFinite, "lu_factor input contains NaN or Inf");
  LUFactorization f;
  const double tol = kPivotRelTol * detail::inf_norm(A);
  f.lu = A;
  if (A.rows() == 0) return f;
  if (detail::lu_in_place(f.lu, f.perm, tol)) return f;
  require(eps > 0.0, ErrorCode::kSingularAfterRidge, "matrix singular and no ridge allowed");
  MatrixXd R = A;
  R.diagonal().array() += eps;
  f.lu = R;
  f.regularized = true;
  f.ridge = eps;
  if (!detail::lu_in_place(f.lu, f.perm, kPivotRelTol * detail::inf_norm(R)))
    fail(ErrorCode::kSingularAfterRidge, "matrix singular after ridge");
  return f;
}

inline VectorXd solve_with(const LUFactorization& f, const VectorXd& b) {
  const int n = f.dim();
  require(b.size() == n, ErrorCode::kDimensionMismatch, "solve_with rhs has wrong length");
  VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = b[f.perm[i]];
  for (int i = 1; i < n; ++i) {
    double s = x[i];
    for (int k = 0; k < i; ++k) s -= f.lu(i, k) * x[k];
    x[i] = s;
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = x[i];
    for (int k = i + 1; k < n; ++k) s -= f.lu(i, k) * x[k];
    x[i] = s / f.lu(i, i);
  }
  return x;
}

/// Least squares min ||A x - b|| with x_k >= 0 for k not in `free_vars`
/// (Lawson-Hanson active set; free variables never leave the passive set).
struct NNLSResult {
  VectorXd x;
  double residual_norm = 0.0;
  int iterations = 0;
};

inline NNLSResult nnls(const MatrixXd& A, const VectorXd& b, const std::vector<bool>& is_free) {
  const int m = static_cast<int>(A.cols());
  require(A.rows() == b.size(), ErrorCode::kDimensionMismatch, "nnls: A rows != b length");
  require(static_cast<int>(is_free.size()) == m, ErrorCode::kDimensionMismatch, "nnls: free mask length");
  require(A.allFinite() && b.allFinite(), ErrorCode::kNonFinite, "nnls input contains NaN or Inf");
  NNLSResult res;
  res.x = VectorXd::Zero(m);
  if (m == 0) {
    res.residual_norm = b.norm();
    return res;
  }
  std::vector<bool> passive(is_free);
  auto ls_on_passive = [&]() {
    std::vector<int> cols;
    for (int k = 0; k < m; ++k)
      if (passive[k]) cols.push_back(k);
    VectorXd s = VectorXd::Zero(m);
    if (cols.empty()) return s;
    MatrixXd Ap(A.rows(), cols.size());
    for (size_t c = 0; c < cols.size(); ++c) Ap.col(c) = A.col(cols[c]);
    VectorXd sp = Ap.completeOrthogonalDecomposition().solve(b);
    for (size_t c = 0; c < cols.size(); ++c) s[cols[c]] = sp[c];
    return s;
  };
  VectorXd& x = res.x;
  x = ls_on_passive();
  const double tol = 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff() * std::max(1.0, b.cwiseAbs().maxCoeff()));
  const int max_outer = 3 * m + 10;
  for (int outer = 0; outer < max_outer; ++outer) {
    res.iterations = outer + 1;
    VectorXd w = A.transpose() * (b - A * x);
    int best = -1;
    double wmax = tol;
    for (int k = 0; k < m; ++k) {
      if (!passive[k] && w[k] > wmax) {
        wmax = w[k];
        best = k;
      }
    }
    if (best < 0) break;
    passive[best] = true;
    for (int inner = 0; inner < 3 * m + 10; ++inner) {
      VectorXd s = ls_on_passive();
      double alpha = 1.0;
      bool blocked = false;
      for (int k = 0; k < m; ++k) {
        if (passive[k] && !is_free[k] && s[k] <= 0.0) {
          double denom = x[k] - s[k];
          double a = denom > 0 ? x[k] / denom : 0.0;
          if (a < alpha) alpha = a;
          blocked = true;
        }
      }
      if (!blocked) {
        x = s;
        break;
      }
      x += alpha * (s - x);
      for (int k = 0; k < m; ++k) {
        if (passive[k] && !is_free[k] && x[k] <= tol) {
          passive[k] = false;
          x[k] = 0.0;
        }
      }
    }
  }
  for (int k = 0; k < m; ++k)
    if (!is_free[k] && x[k] < 0) x[k] = 0.0;
  res.residual_norm = (A * x - b).norm();
  return res;
}

struct Multipliers {
  VectorXd eq;    // free sign
  VectorXd ineq;  // >= 0
  double residual = 0.0;  // ||grad_f + E^T eq + A^T ineq||
};

/// Least-squares stationarity multipliers: rows of `eq_grads` and
/// `act_ineq_grads` are constraint gradients.
inline Multipliers nnls_multipliers(const VectorXd& grad_f, const MatrixXd& eq_grads, const MatrixXd& act_ineq_grads) {
  const int n = static_cast<int>(grad_f.size());
  const int me = static_cast<int>(eq_grads.rows()), mi = static_cast<int>(act_ineq_grads.rows());
  require((me == 0 || eq_grads.cols() == n) && (mi == 0 || act_ineq_grads.cols() == n),
          ErrorCode::kDimensionMismatch, "constraint gradients have wrong width");
  MatrixXd A(n, me + mi);
  if (me) A.leftCols(me) = eq_grads.transpose();
  if (mi) A.rightCols(mi) = act_ineq_grads.transpose();
  std::vector<bool> is_free(me + mi, false);
  std::fill(is_free.begin(), is_free.begin() + me, true);
  const NNLSResult r = nnls(A, -grad_f, is_free);
  return {r.x.head(me), r.x.tail(mi), r.residual_norm};
}

/// Type-1 weighted quantile: the smallest value whose cumulative normalised
/// weight reaches alpha.
inline double weighted_quantile(std::span<const double> values, std::span<const double> weights, double alpha) {
  require(!values.empty(), ErrorCode::kEmpty, "weighted_quantile on empty input");
  require(values.size() == weights.size(), ErrorCode::kDimensionMismatch, "values/weights length mismatch");
  require(alpha > 0.0 && alpha <= 1.0, ErrorCode::kConfig, "quantile level must be in (0,1]");
  double total = 0.0;
  for (size_t i = 0; i < values.size(); ++i) {
    require(std::isfinite(values[i]) && std::isfinite(weights[i]), ErrorCode::kNonFinite, "weighted_quantile input");
    require(weights[i] >= 0.0, ErrorCode::kConfig, "negative weight");
    total += weights[i];
  }
  require(total > 0.0, ErrorCode::kAllZeroWeights, "all weights are zero");
  std::vector<int> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return values[a] < values[b]; });
  double cum = 0.0;
  const double target = alpha - 1e-12;
  for (int i : idx) {
    if (weights[i] <= 0.0) continue;
    cum += weights[i] / total;
    if (cum >= target) return values[i];
  }
  return values[idx.back()];
}

/// Equal-weight type-1 quantile. Reorders `values`.
inline double quantile_type1(std::vector<double>& values, double alpha) {
  require(!values.empty(), ErrorCode::kEmpty, "quantile on empty input");
  const auto n = static_cast<long>(values.size());
  long k = static_cast<long>(std::ceil((alpha - 1e-12) * static_cast<double>(n)));
  k = std::clamp(k, 1L, n);
  std::nth_element(values.begin(), values.begin() + (k - 1), values.end());
  return values[k - 1];
}

/// Box-kernel density estimate (1/(n b)) sum 1{|v_i - point| <= b/2}.
inline double kde_at(std::span<const double> values, double point, double bandwidth) {
  require(bandwidth > 0.0, ErrorCode::kNonPositiveBandwidth, "bandwidth must be positive");
  require(!values.empty(), ErrorCode::kEmpty, "kde_at on empty input");
  const double half = 0.5 * bandwidth;
  long cnt = 0;
  for (double v : values) cnt += std::abs(v - point) <= half;
  return static_cast<double>(cnt) / (static_cast<double>(values.size()) * bandwidth);
}

/// Silverman rule with a log(n)/n floor: max(1.06 sd n^-1/5, log n / n).
inline double default_bandwidth(std::span<const double> values) {
  const auto n = static_cast<double>(values.size());
  if (values.size() < 2) return 1.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return std::max(1.06 * sd * std::pow(n, -0.2), std::log(n) / n);
}

/// Greedily keeps rows of `rows` that are linearly independent of those kept so far.
inline std::vector<int> independent_rows(const MatrixXd& rows, double tol = 1e-9) {
  std::vector<int> keep;
  if (rows.rows() == 0) return keep;
  MatrixXd basis(0, rows.cols());
  for (int r = 0; r < rows.rows(); ++r) {
    VectorXd v = rows.row(r).transpose();
    const double scale = std::max(1.0, v.norm());
    for (int b = 0; b < basis.rows(); ++b) v -= basis.row(b).dot(v) * basis.row(b).transpose();
    for (int b = 0; b < basis.rows(); ++b) v -= basis.row(b).dot(v) * basis.row(b).transpose();
    if (v.norm() > tol * scale) {
      keep.push_back(r);
      basis.conservativeResize(basis.rows() + 1, Eigen::NoChange);
      basis.row(basis.rows() - 1) = v.normalized().transpose();
    }
  }
  return keep;
}

/// Euclidean projection of x onto {v : A v = b} (A need not have full row rank).
inline VectorXd project_affine(const VectorXd& x, const MatrixXd& A, const VectorXd& b) {
  if (A.rows() == 0) return x;
  VectorXd r = A * x - b;
  VectorXd y = (A * A.transpose()).completeOrthogonalDecomposition().solve(r);
  return x - A.transpose() * y;
}

}  // namespace sof
