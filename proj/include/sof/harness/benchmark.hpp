// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "sof/builder.hpp"
#include "sof/decide.hpp"
#include "sof/error.hpp"
#include "sof/forest.hpp"
#include "sof/harness/evaluation.hpp"
#include "sof/harness/scenarios.hpp"
#include "sof/importance.hpp"
#include "sof/rng.hpp"

namespace sof::harness {

/// One policy in a benchmark: a forest criterion (with optional tree count) or kNN.
struct Method {
  std::string name;
  std::string criterion;  // empty for knn
  int n_trees = 0;        // 0: benchmark default
  int k = 0;              // knn only
};

struct BenchConfig {
  std::string scenario = "newsvendor-trunc";
  nlohmann::json scenario_params = nlohmann::json::object();
  std::vector<Method> methods;
  std::vector<int> n_values = {100};
  int reps = 1;
  int n_trees = 100;
  int n_query = 200;
  int n_cond = 2000;
  int n_saa = 20000;
  std::uint64_t seed = 1;
  int workers = 1;
  bool importance = false;
  nlohmann::json forest = nlohmann::json::object();  // FitConfig overrides
};

inline Method parse_method(const nlohmann::json& j) {
  Method m;
  if (j.is_string()) {
    m.name = j.get<std::string>();
    if (m.name != "knn") m.criterion = m.name;
    return m;
  }
  m.name = j.at("name").get<std::string>();
  m.criterion = j.value("criterion", m.name == "knn" ? std::string() : m.name);
  m.n_trees = j.value("n_trees", 0);
  m.k = j.value("k", 0);
  return m;
}

inline nlohmann::json to_json(const Method& m) {
  nlohmann::json j = {{"name", m.name}};
  if (!m.criterion.empty()) j["criterion"] = m.criterion;
  if (m.n_trees) j["n_trees"] = m.n_trees;
  if (m.k) j["k"] = m.k;
  return j;
}

inline nlohmann::json to_json(const BenchConfig& c) {
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : c.methods) methods.push_back(to_json(m));
  return {{"scenario", c.scenario}, {"scenario_params", c.scenario_params}, {"methods", methods},
          {"n", c.n_values},        {"reps", c.reps},                       {"n_trees", c.n_trees},
          {"n_query", c.n_query},   {"n_cond", c.n_cond},                   {"n_saa", c.n_saa},
          {"seed", c.seed},         {"importance", c.importance},           {"forest", c.forest}};
}

inline BenchConfig bench_config_from_json(const nlohmann::json& j) {
  BenchConfig c;
  try {
    c.scenario = j.value("scenario", c.scenario);
    c.scenario_params = j.value("scenario_params", c.scenario_params);
    if (j.contains("methods"))
      for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m));
    if (j.contains("n")) c.n_values = j.at("n").get<std::vector<int>>();
    c.reps = j.value("reps", c.reps);
    c.n_trees = j.value("n_trees", c.n_trees);
    c.n_query = j.value("n_query", c.n_query);
    c.n_cond = j.value("n_cond", c.n_cond);
    c.n_saa = j.value("n_saa", c.n_saa);
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    c.importance = j.value("importance", c.importance);
    c.forest = j.value("forest", c.forest);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("benchmark config: ") + e.what());
  }
  require(!c.methods.empty(), ErrorCode::kConfig, "benchmark needs at least one method");
  require(c.reps >= 1 && !c.n_values.empty(), ErrorCode::kConfig, "benchmark needs reps >= 1 and some n");
  for (const auto& m : c.methods) {
    if (m.criterion.empty()) require(m.k >= 1, ErrorCode::kConfig, "knn method needs k >= 1");
    else parse_criterion(m.criterion);
  }
  return c;
}

inline std::uint64_t config_hash(const BenchConfig& c) { return hash_string(to_json(c).dump()); }

struct BenchRow {
  std::string method;
  int n = 0;
  int rep = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  RiskResult risk;
  double fit_ms = 0.0;
  int n_infeasible = 0;  // decisions whose estimated stochastic constraints were infeasible
  std::vector<double> split_frequency;
  std::vector<double> mdi;
};

struct BenchmarkReport {
  BenchConfig config;
  std::vector<BenchRow> rows;
};

inline FitConfig method_fit_config(const BenchConfig& bc, const Method& m, std::uint64_t seed) {
  nlohmann::json j = bc.forest;
  j["criterion"] = m.criterion;
  j["n_trees"] = m.n_trees ? m.n_trees : bc.n_trees;
  j["seed"] = seed;
  return fit_config_from_json(j);
}

inline std::uint64_t cell_seed(std::uint64_t seed, int n, int rep) {
  return derive_seed(seed, (static_cast<std::uint64_t>(n) << 20) + static_cast<std::uint64_t>(rep));
}

/// Runs every method on one (n, rep) cell. All methods share the training data,
/// the forest seed and the evaluation draws.
inline std::vector<BenchRow> run_cell(const BenchConfig& bc, const Scenario& sc, int n, int rep) {
  const std::uint64_t seed = cell_seed(bc.seed, n, rep);
  const Dataset train = simulate(sc, n, seed);
  const EvalSet ev = make_eval_set(sc, bc.n_query, bc.n_cond, bc.n_saa, derive_seed(seed, 1));
  const std::uint64_t h = config_hash(bc);
  std::vector<BenchRow> rows;
  for (const Method& m : bc.methods) {
    BenchRow row;
    row.method = m.name;
    row.n = n;
    row.rep = rep;
    row.seed = seed;
    row.config_hash = h;
    std::vector<VectorXd> decisions(ev.Xq.rows());
    const auto t0 = std::chrono::steady_clock::now();
    if (m.criterion.empty()) {
      row.fit_ms = 0.0;
      for (Eigen::Index q = 0; q < ev.Xq.rows(); ++q) {
        const std::span<const double> x(ev.Xq.row(q).data(), static_cast<size_t>(sc.p));
        Decision d = decide_with_weights(sc.problem, train, knn_weights(train, x, std::min(m.k, n)));
        row.n_infeasible += !d.feasible;
        decisions[q] = std::move(d.z);
      }
    } else {
      const Forest f = fit_forest(sc.problem, train, method_fit_config(bc, m, seed), 1);
      row.fit_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      const ForestIndex idx = build_index(f, train);
      for (Eigen::Index q = 0; q < ev.Xq.rows(); ++q) {
        const std::span<const double> x(ev.Xq.row(q).data(), static_cast<size_t>(sc.p));
        Decision d = decide(f, idx, sc.problem, train, x);
        row.n_infeasible += !d.feasible;
        decisions[q] = std::move(d.z);
      }
      if (bc.importance) {
        try {
          row.split_frequency = split_frequency(f, sc.p);
          row.mdi = mdi_importance(f, sc.p);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kNoSplits) throw;
        }
      }
    }
    row.risk = relative_risk(sc, ev, decisions);
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Cartesian (n x rep) grid; cells may run concurrently, rows are assembled in
/// grid order so the report does not depend on `workers`.
inline BenchmarkReport run_benchmark(const BenchConfig& bc) {
  const Scenario sc = make_scenario(bc.scenario, bc.scenario_params);
  struct Cell {
    int n, rep;
  };
  std::vector<Cell> cells;
  for (int n : bc.n_values)
    for (int r = 0; r < bc.reps; ++r) cells.push_back({n, r});
  std::vector<std::vector<BenchRow>> out(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<size_t> next{0};
  auto work = [&]() {
    for (size_t c = next++; c < cells.size(); c = next++) {
      try {
        out[c] = run_cell(bc, sc, cells[c].n, cells[c].rep);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const int w = std::max(1, std::min<int>(bc.workers, static_cast<int>(cells.size())));
  for (int k = 1; k < w; ++k) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  BenchmarkReport rep;
  rep.config = bc;
  for (auto& v : out)
    for (auto& r : v) rep.rows.push_back(std::move(r));
  return rep;
}

inline void write_report_csv(const BenchmarkReport& r, std::ostream& out) {
  out << "method,n,rep,seed,config_hash,relative_risk,policy_risk,optimal_risk,mean_shortfall,cond_violation,fit_ms,n_infeasible\n";
  out.precision(10);
  for (const auto& row : r.rows)
    out << row.method << ',' << row.n << ',' << row.rep << ',' << row.seed << ',' << row.config_hash << ','
        << row.risk.relative_risk << ',' << row.risk.policy_risk << ',' << row.risk.optimal_risk << ','
        << row.risk.mean_shortfall << ',' << row.risk.mean_cond_violation << ',' << row.fit_ms << ','
        << row.n_infeasible << '\n';
}

inline nlohmann::json to_json(const BenchmarkReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json j = {{"method", row.method},
                        {"n", row.n},
                        {"rep", row.rep},
                        {"seed", row.seed},
                        {"config_hash", row.config_hash},
                        {"relative_risk", row.risk.relative_risk},
                        {"policy_risk", row.risk.policy_risk},
                        {"optimal_risk", row.risk.optimal_risk},
                        {"mean_shortfall", row.risk.mean_shortfall},
                        {"cond_violation", row.risk.mean_cond_violation},
                        {"fit_ms", row.fit_ms},
                        {"n_infeasible", row.n_infeasible}};
    if (!row.split_frequency.empty()) j["split_frequency"] = row.split_frequency;
    if (!row.mdi.empty()) j["mdi"] = row.mdi;
    rows.push_back(j);
  }
  return {{"config", to_json(r.config)}, {"rows", rows}};
}

/// Values of one metric for (method, n), in rep order.
inline std::vector<double> column(const BenchmarkReport& r, const std::string& method, int n,
                                  double (*get)(const BenchRow&)) {
  std::vector<double> v;
  for (const auto& row : r.rows)
    if (row.method == method && row.n == n) v.push_back(get(row));
  return v;
}

inline double median(std::vector<double> v) {
  require(!v.empty(), ErrorCode::kEmpty, "median of empty sample");
  std::sort(v.begin(), v.end());
  const size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double mean(const std::vector<double>& v) {
  require(!v.empty(), ErrorCode::kEmpty, "mean of empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Percentile bootstrap interval for the mean.
inline std::pair<double, double> bootstrap_mean_ci(const std::vector<double>& v, int draws, double level,
                                                   std::uint64_t seed) {
  require(!v.empty(), ErrorCode::kEmpty, "bootstrap of empty sample");
  Rng rng(seed);
  boost::random::uniform_int_distribution<int> pick(0, static_cast<int>(v.size()) - 1);
  std::vector<double> means(draws);
  for (double& m : means) {
    double s = 0.0;
    for (size_t k = 0; k < v.size(); ++k) s += v[pick(rng)];
    m = s / static_cast<double>(v.size());
  }
  std::sort(means.begin(), means.end());
  const double a = 0.5 * (1.0 - level);
  auto at = [&](double q) { return means[std::min<size_t>(means.size() - 1, static_cast<size_t>(q * draws))]; };
  return {at(a), at(1.0 - a)};
}

struct TimingRow {
  std::string criterion;
  int n = 0;
  int rep = 0;
  double seconds = 0.0;
};

struct TimingSummary {
  std::string criterion;
  int n = 0;
  double mean = 0.0;
  double sd = 0.0;
};

/// Single-tree fit times on identical data across criteria per rep.
inline std::vector<TimingRow> bench_timing(const Scenario& sc, const std::vector<int>& n_values,
                                           const std::vector<std::string>& criteria, int reps, std::uint64_t seed,
                                           const nlohmann::json& forest = nlohmann::json::object()) {
  std::vector<TimingRow> rows;
  for (int n : n_values) {
    for (int r = 0; r < reps; ++r) {
      const std::uint64_t cs = cell_seed(seed, n, r);
      const Dataset ds = simulate(sc, n, cs);
      std::vector<int> all(n);
      for (int i = 0; i < n; ++i) all[i] = i;
      for (const std::string& c : criteria) {
        nlohmann::json j = forest;
        j["criterion"] = c;
        j["n_trees"] = 1;
        j["seed"] = cs;
        const FitConfig cfg = fit_config_from_json(j);
        const auto t0 = std::chrono::steady_clock::now();
        fit_tree(sc.problem, ds, all, cfg, derive_seed(cs, 7));
        rows.push_back({c, n, r, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
      }
    }
  }
  return rows;
}

inline std::vector<TimingSummary> summarize_timing(const std::vector<TimingRow>& rows) {
  std::map<std::pair<std::string, int>, std::vector<double>> groups;
  std::vector<std::pair<std::string, int>> order;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.criterion, r.n);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(r.seconds);
  }
  std::vector<TimingSummary> out;
  for (const auto& key : order) {
    const auto& v = groups[key];
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    out.push_back({key.first, key.second, m, v.size() > 1 ? std::sqrt(ss / (v.size() - 1)) : 0.0});
  }
  return out;
}

}  // namespace sof::harness
