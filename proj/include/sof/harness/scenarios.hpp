// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/random/normal_distribution.hpp>
#include <cmath>
#include <cstdint>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "sof/dataset.hpp"
#include "sof/error.hpp"
#include "sof/problem.hpp"
#include "sof/rng.hpp"

namespace sof::harness {

/// How the conditional-optimal risk is obtained for a scenario.
enum class OptimumKind {
  kNewsvendorQuantile,  // closed-form conditional quantiles
  kSaa,                 // large-sample conditional SAA
  kTrueMoments,         // quadratic program on the true conditional mean/covariance
};

/// Data-generating process: X ~ N(0, I_p), Y | X from `sample_y`.
struct Scenario {
  std::string id;
  int p = 10;
  int d = 1;
  ProblemSpec problem;
  OptimumKind optimum = OptimumKind::kSaa;
  std::function<void(const double* x, Rng& rng, double* y)> sample_y;
  std::function<VectorXd(const double* x)> cond_mean;  // set for Gaussian outcomes
  std::function<MatrixXd(const double* x)> cond_cov;   // set for Gaussian outcomes
  std::function<VectorXd(const double* x)> optimum_closed_form;
};

inline double std_normal(Rng& rng) { return boost::random::normal_distribution<double>(0.0, 1.0)(rng); }

/// W | W >= 0 with W ~ Normal(mu, sigma), by rejection.
inline double trunc_normal(double mu, double sigma, Rng& rng) {
  for (;;) {
    const double w = mu + sigma * std_normal(rng);
    if (w >= 0.0) return w;
  }
}

/// Level-q quantile of W | W >= 0, W ~ Normal(mu, sigma).
inline double trunc_normal_quantile(double mu, double sigma, double q) {
  const boost::math::normal_distribution<double> nd(0.0, 1.0);
  const double lo = boost::math::cdf(nd, -mu / sigma);
  return mu + sigma * boost::math::quantile(nd, lo + q * (1.0 - lo));
}

inline double indicator(bool b) { return b ? 1.0 : 0.0; }

inline Scenario newsvendor_trunc(int p = 10) {
  require(p >= 2, ErrorCode::kConfig, "newsvendor-trunc needs p >= 2");
  Scenario s;
  s.id = "newsvendor-trunc";
  s.p = p;
  s.d = 2;
  Newsvendor nv;
  nv.alpha = (VectorXd(2) << 5.0, 0.05).finished();
  nv.beta = (VectorXd(2) << 100.0, 1.0).finished();
  s.problem = nv;
  s.optimum = OptimumKind::kNewsvendorQuantile;
  s.sample_y = [](const double* x, Rng& rng, double* y) {
    y[0] = trunc_normal(3.0, std::exp(x[0]), rng);
    y[1] = trunc_normal(3.0, std::exp(x[1]), rng);
  };
  s.optimum_closed_form = [nv](const double* x) {
    VectorXd z(2);
    for (int l = 0; l < 2; ++l)
      z[l] = trunc_normal_quantile(3.0, std::exp(x[l]), nv.beta[l] / (nv.alpha[l] + nv.beta[l]));
    return z;
  };
  return s;
}

/// Per-asset scale parameter 1 - 0.5*1{window} (lognormal) or 5 - 4*1{window} (normal)
/// over the windows [-3,-1], [-1,1], [1,3] of x_2.
inline double window_scale(double x2, int asset, double base, double drop) {
  static const double lo[3] = {-3.0, -1.0, 1.0};
  return base - drop * indicator(x2 >= lo[asset] && x2 <= lo[asset] + 2.0);
}

inline Scenario cvar_lognormal(int p = 10, double level = 0.2, double mean_weight = 0.0) {
  require(p >= 2, ErrorCode::kConfig, "cvar-lognormal needs p >= 2");
  Scenario s;
  s.id = "cvar-lognormal";
  s.p = p;
  s.d = 3;
  CVaRPortfolio cp;
  cp.d = 3;
  cp.level = level;
  cp.mean_weight = mean_weight;
  s.problem = cp;
  s.optimum = OptimumKind::kSaa;
  s.sample_y = [](const double* x, Rng& rng, double* y) {
    const double base[3] = {1.0 + 0.2 * std::exp(x[0]), 1.0 - 0.2 * x[0], 1.0 + 0.2 * std::abs(x[0])};
    for (int l = 0; l < 3; ++l) {
      const double var = window_scale(x[1], l, 1.0, 0.5);
      y[l] = base[l] - std::exp(std::sqrt(var) * std_normal(rng));
    }
  };
  return s;
}

inline VectorXd gaussian_mean(const double* x) {
  return (VectorXd(3) << std::exp(x[0]), -x[0], std::abs(x[0])).finished();
}

inline MatrixXd gaussian_cov(const double* x) {
  MatrixXd S = MatrixXd::Zero(3, 3);
  for (int l = 0; l < 3; ++l) S(l, l) = window_scale(x[1], l, 5.0, 4.0);
  return S;
}

inline void gaussian_sample(const double* x, Rng& rng, double* y) {
  const VectorXd m = gaussian_mean(x);
  for (int l = 0; l < 3; ++l) y[l] = m[l] + std::sqrt(window_scale(x[1], l, 5.0, 4.0)) * std_normal(rng);
}

inline Scenario cvar_gaussian(int p = 10, double level = 0.2) {
  require(p >= 2, ErrorCode::kConfig, "cvar-gaussian needs p >= 2");
  Scenario s;
  s.id = "cvar-gaussian";
  s.p = p;
  s.d = 3;
  CVaRPortfolio cp;
  cp.d = 3;
  cp.level = level;
  s.problem = cp;
  s.optimum = OptimumKind::kSaa;
  s.sample_y = gaussian_sample;
  s.cond_mean = gaussian_mean;
  s.cond_cov = gaussian_cov;
  return s;
}

inline Scenario minvar_gaussian(int p = 10) {
  require(p >= 2, ErrorCode::kConfig, "minvar-gaussian needs p >= 2");
  Scenario s;
  s.id = "minvar-gaussian";
  s.p = p;
  s.d = 3;
  VariancePortfolio vp;
  vp.d = 3;
  s.problem = vp;
  s.optimum = OptimumKind::kTrueMoments;
  s.sample_y = gaussian_sample;
  s.cond_mean = gaussian_mean;
  s.cond_cov = gaussian_cov;
  return s;
}

/// Variance objective with budget 1^T z = 1 (shorting allowed) and E[Y^T z | x] >= r.
inline Scenario meanvar_return(int p = 10, double r = 0.1) {
  require(p >= 2, ErrorCode::kConfig, "meanvar-return needs p >= 2");
  Scenario s = minvar_gaussian(p);
  s.id = "meanvar-return";
  VariancePortfolio vp;
  vp.d = 3;
  vp.allow_short = true;
  vp.return_floor = r;
  s.problem = vp;
  return s;
}

/// k x k grid, edges right and down, source top-left, sink bottom-right. Edge
/// times are lognormal with a covariate-driven scale.
inline Scenario shortest_path_grid(int p = 5, int k = 3, double level = 0.2) {
  require(p >= 1 && k >= 2, ErrorCode::kConfig, "shortest-path-grid needs p >= 1 and k >= 2");
  Scenario s;
  s.id = "shortest-path-grid";
  s.p = p;
  CVaRShortestPath sp;
  sp.node_count = k * k;
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < k; ++c) {
      if (c + 1 < k) sp.edges.emplace_back(r * k + c, r * k + c + 1);
      if (r + 1 < k) sp.edges.emplace_back(r * k + c, (r + 1) * k + c);
    }
  sp.source = 0;
  sp.sink = k * k - 1;
  sp.level = level;
  s.d = static_cast<int>(sp.edges.size());
  s.problem = sp;
  s.optimum = OptimumKind::kSaa;
  const int d = s.d;
  s.sample_y = [p, d](const double* x, Rng& rng, double* y) {
    for (int e = 0; e < d; ++e) {
      const double base = 1.0 + 0.5 * (e % 3);
      y[e] = base * std::exp(0.5 * x[e % p] + 0.5 * std_normal(rng));
    }
  };
  return s;
}

inline std::vector<std::string> scenario_ids() {
  return {"newsvendor-trunc", "cvar-lognormal", "cvar-gaussian", "minvar-gaussian", "meanvar-return",
          "shortest-path-grid"};
}

/// Builds a scenario by id. Recognised params: p, level, mean_weight, r_threshold, grid.
inline Scenario make_scenario(const std::string& id, const nlohmann::json& params = nlohmann::json::object()) {
  auto get_int = [&](const char* k, int def) { return params.contains(k) ? params.at(k).get<int>() : def; };
  auto get_dbl = [&](const char* k, double def) { return params.contains(k) ? params.at(k).get<double>() : def; };
  try {
    if (id == "newsvendor-trunc") return newsvendor_trunc(get_int("p", 10));
    if (id == "cvar-lognormal")
      return cvar_lognormal(get_int("p", 10), get_dbl("level", 0.2), get_dbl("mean_weight", 0.0));
    if (id == "cvar-gaussian") return cvar_gaussian(get_int("p", 10), get_dbl("level", 0.2));
    if (id == "minvar-gaussian") return minvar_gaussian(get_int("p", 10));
    if (id == "meanvar-return") return meanvar_return(get_int("p", 10), get_dbl("r_threshold", 0.1));
    if (id == "shortest-path-grid") return shortest_path_grid(get_int("p", 5), get_int("grid", 3), get_dbl("level", 0.2));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("scenario params: ") + e.what());
  }
  fail(ErrorCode::kConfig, "unknown scenario '" + id + "'");
}

inline void sample_x(const Scenario& s, Rng& rng, double* x) {
  for (int j = 0; j < s.p; ++j) x[j] = std_normal(rng);
}

/// n draws of (X, Y); a pure function of (scenario, n, seed).
inline Dataset simulate(const Scenario& s, int n, std::uint64_t seed) {
  require(n >= 1, ErrorCode::kConfig, "simulate needs n >= 1");
  Rng rng(derive_seed(seed, hash_string(s.id)));
  RowMatrix X(n, s.p), Y(n, s.d);
  for (int i = 0; i < n; ++i) {
    sample_x(s, rng, X.row(i).data());
    s.sample_y(X.row(i).data(), rng, Y.row(i).data());
  }
  return make_dataset(std::move(X), std::move(Y));
}

/// n_draws conditional outcomes at x.
inline RowMatrix sample_conditional(const Scenario& s, const double* x, int n_draws, Rng& rng) {
  RowMatrix Y(n_draws, s.d);
  for (int k = 0; k < n_draws; ++k) s.sample_y(x, rng, Y.row(k).data());
  return Y;
}

}  // namespace sof::harness
