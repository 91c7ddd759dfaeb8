// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sof/error.hpp"

namespace sof {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// c(z; y) = 1/2 ||z - y||^2, unconstrained.
struct SquaredError {
  int d = 1;
};

/// c(z; y) = sum_l max{alpha_l (z_l - y_l), beta_l (y_l - z_l)}.
/// Optional capacity sum_l z_l <= C and aggregate service level
/// E[sum_l (Y_l - z_l)^+] <= C'; either one also imposes z >= 0.
struct Newsvendor {
  VectorXd alpha;
  VectorXd beta;
  std::optional<double> capacity;
  std::optional<double> service_level;
};

/// c(z, t; y) = (y^T z - t)^2 - rho y^T z over the simplex (or the affine hull
/// when shorting is allowed); optional E[Y^T z] >= R.
struct VariancePortfolio {
  int d = 1;
  bool allow_short = false;
  std::optional<double> return_floor;
  double mean_weight = 0.0;
};

/// c(z, w; y) = (1/alpha) max{w - y^T z, 0} - w - rho y^T z.
struct CVaRPortfolio {
  int d = 1;
  double level = 0.2;
  double mean_weight = 0.0;
  bool allow_short = false;
  std::optional<double> return_floor;
};

/// Unit source-to-sink flow z >= 0 over a directed graph minimising the CVaR
/// of travel time y^T z: c(z, w; y) = (1/alpha) max{w + y^T z, 0} - w.
struct CVaRShortestPath {
  int node_count = 0;
  std::vector<std::pair<int, int>> edges;
  int source = 0;
  int sink = 0;
  double level = 0.2;
};

enum class StochasticKind { kMeanReturnFloor, kServiceLevel };

/// E[G(z; Y)] <= 0 with G(z; y) = R - y^T z_{1:d} or sum_l (y_l - z_l)^+ - C'.
struct StochasticConstraint {
  StochasticKind kind;
  double param;
  int d;  // number of outcome coordinates entering G
};

/// Deterministic affine constraints plus stochastic constraints.
struct ConstraintSet {
  MatrixXd A_eq;
  VectorXd b_eq;
  MatrixXd A_ub;
  VectorXd b_ub;
  std::vector<StochasticConstraint> stochastic;

  int n_eq() const { return static_cast<int>(A_eq.rows()); }
  int n_ub() const { return static_cast<int>(A_ub.rows()); }
  bool empty() const { return n_eq() == 0 && n_ub() == 0 && stochastic.empty(); }
};

class ProblemSpec {
 public:
  using Variant = std::variant<SquaredError, Newsvendor, VariancePortfolio, CVaRPortfolio, CVaRShortestPath>;

  ProblemSpec() : v_(SquaredError{1}) {}
  template <class T>
  ProblemSpec(T v) : v_(std::move(v)) {  // NOLINT(google-explicit-constructor)
    validate();
  }

  const Variant& variant() const { return v_; }
  template <class T>
  const T* as() const {
    return std::get_if<T>(&v_);
  }

  std::string id() const {
    return std::visit(
        [](const auto& p) -> std::string {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, SquaredError>) return "squared-error";
          if constexpr (std::is_same_v<T, Newsvendor>) return "newsvendor";
          if constexpr (std::is_same_v<T, VariancePortfolio>) return "variance-portfolio";
          if constexpr (std::is_same_v<T, CVaRPortfolio>) return "cvar-portfolio";
          if constexpr (std::is_same_v<T, CVaRShortestPath>) return "cvar-shortest-path";
        },
        v_);
  }

  /// Outcome dimension d.
  int outcome_dim() const {
    return std::visit(
        [](const auto& p) -> int {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, Newsvendor>) return static_cast<int>(p.alpha.size());
          else if constexpr (std::is_same_v<T, CVaRShortestPath>) return static_cast<int>(p.edges.size());
          else return p.d;
        },
        v_);
  }

  /// Decision dimension d_z, including auxiliary variables.
  int decision_dim() const {
    const int d = outcome_dim();
    return std::holds_alternative<SquaredError>(v_) || std::holds_alternative<Newsvendor>(v_) ? d : d + 1;
  }

  /// True when the cost is linear in z plus nonnegative hinge terms (LP-representable).
  bool is_piecewise_linear() const {
    return std::holds_alternative<Newsvendor>(v_) || std::holds_alternative<CVaRPortfolio>(v_) ||
           std::holds_alternative<CVaRShortestPath>(v_);
  }

  /// Sign applied to outcomes in CVaR costs: +1 for returns, -1 for travel times.
  double cvar_sign() const { return std::holds_alternative<CVaRShortestPath>(v_) ? -1.0 : 1.0; }
  double cvar_level() const {
    if (auto* p = as<CVaRPortfolio>()) return p->level;
    if (auto* p = as<CVaRShortestPath>()) return p->level;
    return 0.0;
  }
  double mean_weight() const {
    if (auto* p = as<CVaRPortfolio>()) return p->mean_weight;
    if (auto* p = as<VariancePortfolio>()) return p->mean_weight;
    return 0.0;
  }

  double cost(const VectorXd& z, std::span<const double> y) const;
  ConstraintSet constraints() const;

 private:
  void validate() const;
  Variant v_;
};

inline void ProblemSpec::validate() const {
  std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, SquaredError>) {
          require(p.d >= 1, ErrorCode::kConfig, "squared-error needs d >= 1");
        } else if constexpr (std::is_same_v<T, Newsvendor>) {
          require(p.alpha.size() >= 1 && p.alpha.size() == p.beta.size(), ErrorCode::kConfig,
                  "newsvendor alpha/beta must be nonempty and equal length");
          require((p.alpha.array() > 0).all() && (p.beta.array() > 0).all(), ErrorCode::kConfig,
                  "newsvendor costs must be positive");
          if (p.capacity) require(*p.capacity > 0, ErrorCode::kConfig, "capacity must be positive");
          if (p.service_level) require(*p.service_level >= 0, ErrorCode::kConfig, "service level must be >= 0");
        } else if constexpr (std::is_same_v<T, VariancePortfolio>) {
          require(p.d >= 1, ErrorCode::kConfig, "portfolio needs d >= 1");
          require(p.mean_weight >= 0, ErrorCode::kConfig, "mean weight must be >= 0");
        } else if constexpr (std::is_same_v<T, CVaRPortfolio>) {
          require(p.d >= 1, ErrorCode::kConfig, "portfolio needs d >= 1");
          require(p.level > 0 && p.level < 1, ErrorCode::kConfig, "CVaR level must be in (0,1)");
          require(p.mean_weight >= 0, ErrorCode::kConfig, "mean weight must be >= 0");
        } else {
          require(p.level > 0 && p.level < 1, ErrorCode::kConfig, "CVaR level must be in (0,1)");
          require(p.node_count >= 2 && !p.edges.empty(), ErrorCode::kConfig, "graph needs nodes and edges");
          require(p.source != p.sink && p.source >= 0 && p.sink >= 0 && p.source < p.node_count &&
                      p.sink < p.node_count,
                  ErrorCode::kConfig, "bad source/sink");
          std::vector<std::vector<int>> adj(p.node_count);
          for (auto [a, b] : p.edges) {
            require(a >= 0 && b >= 0 && a < p.node_count && b < p.node_count && a != b, ErrorCode::kConfig,
                    "edge endpoint out of range");
            adj[a].push_back(b);
          }
          std::vector<char> seen(p.node_count, 0);
          std::vector<int> stack{p.source};
          seen[p.source] = 1;
          while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (int v : adj[u])
              if (!seen[v]) seen[v] = 1, stack.push_back(v);
          }
          require(seen[p.sink], ErrorCode::kConfig, "no source-to-sink path");
        }
      },
      v_);
}

inline double ProblemSpec::cost(const VectorXd& z, std::span<const double> y) const {
  require(z.size() == decision_dim() && static_cast<int>(y.size()) == outcome_dim(), ErrorCode::kDimensionMismatch,
          "cost: dimension mismatch");
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, SquaredError>) {
          double s = 0.0;
          for (int l = 0; l < p.d; ++l) s += (z[l] - y[l]) * (z[l] - y[l]);
          return 0.5 * s;
        } else if constexpr (std::is_same_v<T, Newsvendor>) {
          double s = 0.0;
          for (int l = 0; l < p.alpha.size(); ++l)
            s += std::max(p.alpha[l] * (z[l] - y[l]), p.beta[l] * (y[l] - z[l]));
          return s;
        } else if constexpr (std::is_same_v<T, VariancePortfolio>) {
          double r = 0.0;
          for (int l = 0; l < p.d; ++l) r += y[l] * z[l];
          return (r - z[p.d]) * (r - z[p.d]) - p.mean_weight * r;
        } else if constexpr (std::is_same_v<T, CVaRPortfolio>) {
          double r = 0.0;
          for (int l = 0; l < p.d; ++l) r += y[l] * z[l];
          const double w = z[p.d];
          return std::max(w - r, 0.0) / p.level - w - p.mean_weight * r;
        } else {
          const int m = static_cast<int>(p.edges.size());
          double t = 0.0;
          for (int e = 0; e < m; ++e) t += y[e] * z[e];
          const double w = z[m];
          return std::max(w + t, 0.0) / p.level - w;
        }
      },
      v_);
}

inline ConstraintSet ProblemSpec::constraints() const {
  ConstraintSet cs;
  const int dz = decision_dim();
  cs.A_eq = MatrixXd::Zero(0, dz);
  cs.b_eq = VectorXd::Zero(0);
  cs.A_ub = MatrixXd::Zero(0, dz);
  cs.b_ub = VectorXd::Zero(0);
  auto add_ub = [&](const VectorXd& a, double b) {
    cs.A_ub.conservativeResize(cs.A_ub.rows() + 1, Eigen::NoChange);
    cs.A_ub.row(cs.A_ub.rows() - 1) = a.transpose();
    cs.b_ub.conservativeResize(cs.b_ub.size() + 1);
    cs.b_ub[cs.b_ub.size() - 1] = b;
  };
  auto add_eq = [&](const VectorXd& a, double b) {
    cs.A_eq.conservativeResize(cs.A_eq.rows() + 1, Eigen::NoChange);
    cs.A_eq.row(cs.A_eq.rows() - 1) = a.transpose();
    cs.b_eq.conservativeResize(cs.b_eq.size() + 1);
    cs.b_eq[cs.b_eq.size() - 1] = b;
  };
  auto add_nonneg = [&](int count) {
    for (int l = 0; l < count; ++l) {
      VectorXd a = VectorXd::Zero(dz);
      a[l] = -1.0;
      add_ub(a, 0.0);
    }
  };
  auto add_simplex = [&](int d, bool allow_short) {
    VectorXd a = VectorXd::Zero(dz);
    a.head(d).setOnes();
    add_eq(a, 1.0);
    if (!allow_short) add_nonneg(d);
  };
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Newsvendor>) {
          const int d = static_cast<int>(p.alpha.size());
          if (p.capacity) add_ub(VectorXd::Ones(d), *p.capacity);
          if (p.capacity || p.service_level) add_nonneg(d);
          if (p.service_level) cs.stochastic.push_back({StochasticKind::kServiceLevel, *p.service_level, d});
        } else if constexpr (std::is_same_v<T, VariancePortfolio> || std::is_same_v<T, CVaRPortfolio>) {
          add_simplex(p.d, p.allow_short);
          if (p.return_floor) cs.stochastic.push_back({StochasticKind::kMeanReturnFloor, *p.return_floor, p.d});
        } else if constexpr (std::is_same_v<T, CVaRShortestPath>) {
          // Flow conservation at every node but the sink (that row is implied).
          const int m = static_cast<int>(p.edges.size());
          for (int v = 0; v < p.node_count; ++v) {
            if (v == p.sink) continue;
            VectorXd a = VectorXd::Zero(dz);
            for (int e = 0; e < m; ++e) {
              if (p.edges[e].first == v) a[e] += 1.0;
              if (p.edges[e].second == v) a[e] -= 1.0;
            }
            add_eq(a, v == p.source ? 1.0 : 0.0);
          }
          add_nonneg(m);
        }
      },
      v_);
  return cs;
}

/// Per-sample value of a stochastic constraint at z.
inline double stochastic_value(const StochasticConstraint& g, const VectorXd& z, std::span<const double> y) {
  double s = 0.0;
  if (g.kind == StochasticKind::kMeanReturnFloor) {
    for (int l = 0; l < g.d; ++l) s += y[l] * z[l];
    return g.param - s;
  }
  for (int l = 0; l < g.d; ++l) s += std::max(y[l] - z[l], 0.0);
  return s - g.param;
}

/// Per-sample gradient of a stochastic constraint at z (written into `out`).
inline void stochastic_gradient(const StochasticConstraint& g, const VectorXd& z, std::span<const double> y,
                                double* out, int dz) {
  std::fill(out, out + dz, 0.0);
  for (int l = 0; l < g.d; ++l) {
    if (g.kind == StochasticKind::kMeanReturnFloor)
      out[l] = -y[l];
    else
      out[l] = y[l] > z[l] ? -1.0 : 0.0;
  }
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const ProblemSpec& spec) {
  using nlohmann::json;
  return std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        json j;
        if constexpr (std::is_same_v<T, SquaredError>) {
          j = {{"variant", "squared-error"}, {"d", p.d}};
        } else if constexpr (std::is_same_v<T, Newsvendor>) {
          j = {{"variant", "newsvendor"},
               {"alpha", std::vector<double>(p.alpha.data(), p.alpha.data() + p.alpha.size())},
               {"beta", std::vector<double>(p.beta.data(), p.beta.data() + p.beta.size())}};
          if (p.capacity) j["capacity"] = *p.capacity;
          if (p.service_level) j["service_level"] = *p.service_level;
        } else if constexpr (std::is_same_v<T, VariancePortfolio>) {
          j = {{"variant", "variance-portfolio"}, {"d", p.d}, {"allow_short", p.allow_short},
               {"mean_weight", p.mean_weight}};
          if (p.return_floor) j["return_floor"] = *p.return_floor;
        } else if constexpr (std::is_same_v<T, CVaRPortfolio>) {
          j = {{"variant", "cvar-portfolio"}, {"d", p.d}, {"level", p.level}, {"mean_weight", p.mean_weight},
               {"allow_short", p.allow_short}};
          if (p.return_floor) j["return_floor"] = *p.return_floor;
        } else {
          json edges = json::array();
          for (auto [a, b] : p.edges) edges.push_back({a, b});
          j = {{"variant", "cvar-shortest-path"}, {"node_count", p.node_count}, {"edges", edges},
               {"source", p.source}, {"sink", p.sink}, {"level", p.level}};
        }
        return j;
      },
      spec.variant());
}

inline ProblemSpec problem_from_json(const nlohmann::json& j) {
  try {
    const std::string v = j.at("variant").get<std::string>();
    auto vec = [](const nlohmann::json& a) {
      auto s = a.get<std::vector<double>>();
      return VectorXd(Eigen::Map<VectorXd>(s.data(), static_cast<Eigen::Index>(s.size())));
    };
    auto opt = [&](const char* key) -> std::optional<double> {
      if (j.contains(key) && !j[key].is_null()) return j[key].get<double>();
      return std::nullopt;
    };
    if (v == "squared-error") return SquaredError{j.at("d").get<int>()};
    if (v == "newsvendor") {
      Newsvendor p;
      p.alpha = vec(j.at("alpha"));
      p.beta = vec(j.at("beta"));
      p.capacity = opt("capacity");
      p.service_level = opt("service_level");
      return p;
    }
    if (v == "variance-portfolio") {
      VariancePortfolio p;
      p.d = j.at("d").get<int>();
      p.allow_short = j.value("allow_short", false);
      p.mean_weight = j.value("mean_weight", 0.0);
      p.return_floor = opt("return_floor");
      return p;
    }
    if (v == "cvar-portfolio") {
      CVaRPortfolio p;
      p.d = j.at("d").get<int>();
      p.level = j.value("level", 0.2);
      p.mean_weight = j.value("mean_weight", 0.0);
      p.allow_short = j.value("allow_short", false);
      p.return_floor = opt("return_floor");
      return p;
    }
    if (v == "cvar-shortest-path") {
      CVaRShortestPath p;
      p.node_count = j.at("node_count").get<int>();
      for (const auto& e : j.at("edges")) p.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
      p.source = j.at("source").get<int>();
      p.sink = j.at("sink").get<int>();
      p.level = j.value("level", 0.2);
      return p;
    }
    fail(ErrorCode::kConfig, "unknown problem variant '" + v + "'");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("problem spec: ") + e.what());
  }
}

}  // namespace sof
