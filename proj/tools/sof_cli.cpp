// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: simulate, fit, decide, importance, eval, bench-timing.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 infeasible, 1 other failure.

#include <CLI11.hpp>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "sof/harness/benchmark.hpp"
#include "sof/sof.hpp"

namespace {

using nlohmann::json;

int exit_code(sof::ErrorCode c) {
  switch (c) {
    case sof::ErrorCode::kConfig:
    case sof::ErrorCode::kRateOutOfRange:
    case sof::ErrorCode::kKOutOfRange:
    case sof::ErrorCode::kNonPositiveBandwidth:
      return 2;
    case sof::ErrorCode::kData:
    case sof::ErrorCode::kDimensionMismatch:
    case sof::ErrorCode::kNonFinite:
    case sof::ErrorCode::kEmpty:
      return 3;
    case sof::ErrorCode::kInfeasible:
    case sof::ErrorCode::kUnbounded:
      return 4;
    default:
      return 1;
  }
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  sof::require(static_cast<bool>(in), sof::ErrorCode::kConfig, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    sof::fail(sof::ErrorCode::kConfig, path + ": " + e.what());
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  sof::require(static_cast<bool>(out), sof::ErrorCode::kData, "cannot write " + path);
  out << std::setprecision(12);
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<int> int_list(const std::string& s) {
  std::vector<int> out;
  for (const auto& t : split_list(s)) {
    try {
      out.push_back(std::stoi(t));
    } catch (const std::exception&) {
      sof::fail(sof::ErrorCode::kConfig, "not an integer: '" + t + "'");
    }
  }
  return out;
}

struct Options {
  std::string data, problem, config, forest, query, scenario, n = "", criteria, out;
  int reps = 1;
  std::uint64_t seed = 1;
  int workers = 1;
  bool seed_set = false;
};

int run_simulate(const Options& o) {
  sof::require(!o.scenario.empty(), sof::ErrorCode::kConfig, "simulate needs --scenario");
  sof::require(!o.out.empty(), sof::ErrorCode::kConfig, "simulate needs --out");
  const json params = o.config.empty() ? json::object() : read_json(o.config);
  const auto sc = sof::harness::make_scenario(o.scenario, params);
  const auto ns = int_list(o.n.empty() ? "100" : o.n);
  sof::require(ns.size() == 1, sof::ErrorCode::kConfig, "simulate takes a single --n");
  sof::write_csv(sof::harness::simulate(sc, ns[0], o.seed), o.out);
  auto manifest = open_out(o.out + ".json");
  manifest << json{{"scenario", o.scenario}, {"params", params}, {"n", ns[0]}, {"seed", o.seed},
                   {"problem", sof::to_json(sc.problem)}}
                  .dump(2)
           << '\n';
  return 0;
}

int run_fit(const Options& o) {
  sof::require(!o.data.empty() && !o.problem.empty(), sof::ErrorCode::kConfig, "fit needs --data and --problem");
  sof::require(!o.out.empty(), sof::ErrorCode::kConfig, "fit needs --out");
  const sof::ProblemSpec spec = [&] {
    try {
      return sof::problem_from_json(read_json(o.problem));
    } catch (const sof::Error& e) {
      sof::fail(sof::ErrorCode::kConfig, e.what());
    }
  }();
  const sof::Dataset ds = sof::read_csv(o.data);
  json cfg_json = o.config.empty() ? json::object() : read_json(o.config);
  if (o.seed_set) cfg_json["seed"] = o.seed;
  if (!o.criteria.empty()) cfg_json["criterion"] = o.criteria;
  const sof::FitConfig cfg = sof::fit_config_from_json(cfg_json);
  std::vector<sof::TreeLog> logs;
  const sof::Forest f = sof::fit_forest(spec, ds, cfg, o.workers, &logs);
  sof::save_forest(f, o.out);
  auto log = open_out(o.out + ".log.jsonl");
  for (const auto& l : logs) log << sof::to_json(l).dump() << '\n';
  return 0;
}

int run_decide(const Options& o) {
  sof::require(!o.forest.empty() && !o.data.empty() && !o.query.empty(), sof::ErrorCode::kConfig,
               "decide needs --forest, --data and --query");
  sof::require(!o.out.empty(), sof::ErrorCode::kConfig, "decide needs --out");
  const sof::Forest f = sof::load_forest(o.forest);
  const sof::Dataset ds = sof::read_csv(o.data);
  const sof::RowMatrix Xq = sof::read_features_csv(o.query);
  sof::require(Xq.cols() == ds.p(), sof::ErrorCode::kDimensionMismatch, "query and data have different p");
  const sof::ForestIndex idx = sof::build_index(f, ds);
  auto out = open_out(o.out);
  const int dz = f.problem.decision_dim();
  for (int j = 0; j < dz; ++j) out << "z_" << j + 1 << ',';
  out << "value,feasible\n";
  for (Eigen::Index q = 0; q < Xq.rows(); ++q) {
    const std::span<const double> x(Xq.row(q).data(), static_cast<size_t>(Xq.cols()));
    const sof::Decision d = sof::decide(f, idx, f.problem, ds, x);
    for (int j = 0; j < dz; ++j) out << d.z[j] << ',';
    out << d.value << ',' << (d.feasible ? 1 : 0) << '\n';
  }
  return 0;
}

int run_importance(const Options& o) {
  sof::require(!o.forest.empty() && !o.out.empty(), sof::ErrorCode::kConfig, "importance needs --forest and --out");
  const sof::Forest f = sof::load_forest(o.forest);
  int p = 0;
  if (!o.data.empty()) {
    p = sof::read_csv(o.data).p();
  } else {
    for (const auto& t : f.trees)
      for (const auto& nd : t.nodes)
        if (!nd.leaf) p = std::max(p, nd.split.feature + 1);
  }
  const sof::ImportanceReport r = sof::importance_report(f, p);
  auto out = open_out(o.out);
  out << "feature,mdi,split_frequency\n";
  for (int j = 0; j < p; ++j) out << j + 1 << ',' << r.mdi[j] << ',' << r.split_frequency[j] << '\n';
  return 0;
}

int run_eval(const Options& o) {
  sof::require(!o.out.empty(), sof::ErrorCode::kConfig, "eval needs --out (file prefix)");
  json j = o.config.empty() ? json::object() : read_json(o.config);
  if (!o.scenario.empty()) j["scenario"] = o.scenario;
  if (!o.n.empty()) j["n"] = int_list(o.n);
  if (o.reps > 1) j["reps"] = o.reps;
  if (o.seed_set) j["seed"] = o.seed;
  if (!o.criteria.empty()) j["methods"] = split_list(o.criteria);
  j["workers"] = o.workers;
  const auto bc = sof::harness::bench_config_from_json(j);
  const auto report = sof::harness::run_benchmark(bc);
  auto csv = open_out(o.out + ".csv");
  sof::harness::write_report_csv(report, csv);
  json manifest = sof::harness::to_json(report);
  manifest["config_hash"] = sof::harness::config_hash(bc);
  auto js = open_out(o.out + ".json");
  js << manifest.dump(2) << '\n';
  for (const auto& m : bc.methods)
    for (int n : bc.n_values) {
      const auto v = sof::harness::column(report, m.name, n,
                                          [](const sof::harness::BenchRow& r) { return r.risk.relative_risk; });
      std::cout << m.name << " n=" << n << " median relative risk " << sof::harness::median(v) << '\n';
    }
  return 0;
}

int run_bench_timing(const Options& o) {
  sof::require(!o.out.empty(), sof::ErrorCode::kConfig, "bench-timing needs --out");
  const json params = o.config.empty() ? json::object() : read_json(o.config);
  const auto sc = sof::harness::make_scenario(o.scenario.empty() ? "cvar-lognormal" : o.scenario, params);
  const auto crits = split_list(o.criteria.empty() ? "apx-risk,apx-soln,oracle" : o.criteria);
  for (const auto& c : crits) sof::parse_criterion(c);
  const auto rows = sof::harness::bench_timing(sc, int_list(o.n.empty() ? "400" : o.n), crits, o.reps, o.seed);
  auto out = open_out(o.out);
  out << "criterion,n,mean_seconds,sd_seconds\n";
  for (const auto& s : sof::harness::summarize_timing(rows))
    out << s.criterion << ',' << s.n << ',' << s.mean << ',' << s.sd << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic optimization forests"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "Training CSV with x_* and y_* columns");
    sub->add_option("--problem", o.problem, "Problem JSON");
    sub->add_option("--config", o.config, "Configuration JSON");
    sub->add_option("--forest", o.forest, "Forest JSON");
    sub->add_option("--query", o.query, "Query CSV with x_* columns");
    sub->add_option("--scenario", o.scenario, "Scenario id");
    sub->add_option("--n", o.n, "Sample size(s), comma separated");
    sub->add_option("--reps", o.reps, "Replications")->check(CLI::PositiveNumber);
    sub->add_option("--seed", o.seed, "Seed")->each([&](const std::string&) { o.seed_set = true; });
    sub->add_option("--criteria", o.criteria, "Criterion or comma-separated criteria");
    sub->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out, "Output path");
  };
  struct Cmd {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const Cmd cmds[] = {
      {"simulate", "Draw a dataset from a scenario", run_simulate},
      {"fit", "Fit a forest", run_fit},
      {"decide", "Forest decisions at query points", run_decide},
      {"importance", "MDI and split-frequency importance", run_importance},
      {"eval", "Run a benchmark grid", run_eval},
      {"bench-timing", "Single-tree fit times per criterion", run_bench_timing},
  };
  std::vector<std::pair<CLI::App*, const Cmd*>> subs;
  for (const Cmd& c : cmds) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    subs.emplace_back(sub, &c);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    for (auto& [sub, cmd] : subs)
      if (sub->parsed()) return cmd->run(o);
  } catch (const sof::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
