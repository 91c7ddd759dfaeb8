// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "sof/criteria.hpp"
#include "sof/error.hpp"
#include "sof/problem.hpp"
#include "sof/tree.hpp"

namespace sof {

enum class ThresholdMode { kAllMidpoints, kRandom };
enum class SubsampleMode { kBootstrap, kWithoutReplacement, kHonest };

struct FitConfig {
  Criterion criterion;
  int n_trees = 500;
  int min_leaf = 10;
  double balance_frac = 0.2;
  int max_depth = -1;  // negative: unlimited
  int mtry = 0;        // 0: all features
  ThresholdMode threshold_mode = ThresholdMode::kAllMidpoints;
  int n_thresholds = 10;  // used by ThresholdMode::kRandom
  SubsampleMode subsample_mode = SubsampleMode::kBootstrap;
  double subsample_rate = 1.0;
  double ridge = 1e-3;
  std::string bandwidth_rule = "silverman";
  std::uint64_t seed = 0;

  void validate() const {
    require(n_trees >= 1, ErrorCode::kConfig, "n_trees must be >= 1");
    require(min_leaf >= 1, ErrorCode::kConfig, "min_leaf must be >= 1");
    require(balance_frac > 0.0 && balance_frac <= 0.5, ErrorCode::kConfig, "balance_frac must lie in (0, 0.5]");
    require(mtry >= 0, ErrorCode::kConfig, "mtry must be >= 0");
    require(n_thresholds >= 1, ErrorCode::kConfig, "n_thresholds must be >= 1");
    require(ridge >= 0.0 && std::isfinite(ridge), ErrorCode::kConfig, "ridge must be finite and >= 0");
    require(criterion.scale > 0.0 && std::isfinite(criterion.scale), ErrorCode::kConfig,
            "criterion_scale must be positive");
    require(subsample_rate > 0.0 && subsample_rate <= 1.0, ErrorCode::kRateOutOfRange,
            "subsample_rate must lie in (0, 1]");
    require(bandwidth_rule == "silverman", ErrorCode::kConfig, "unsupported bandwidth_rule '" + bandwidth_rule + "'");
  }

  /// Smallest admissible child size at a node with n_node rows.
  int min_side(int n_node) const {
    return std::max(min_leaf, static_cast<int>(std::ceil(balance_frac * n_node - 1e-12)));
  }
};

inline const char* to_string(ThresholdMode m) { return m == ThresholdMode::kAllMidpoints ? "all-midpoints" : "random"; }

inline const char* to_string(SubsampleMode m) {
  switch (m) {
    case SubsampleMode::kBootstrap: return "bootstrap";
    case SubsampleMode::kWithoutReplacement: return "without-replacement";
    case SubsampleMode::kHonest: return "honest";
  }
  return "?";
}

inline nlohmann::json to_json(const FitConfig& c) {
  nlohmann::json j = {{"criterion", to_string(c.criterion)},
                      {"n_trees", c.n_trees},
                      {"min_leaf", c.min_leaf},
                      {"balance_frac", c.balance_frac},
                      {"max_depth", c.max_depth},
                      {"mtry", c.mtry},
                      {"threshold_mode", to_string(c.threshold_mode)},
                      {"n_thresholds", c.n_thresholds},
                      {"subsample_mode", to_string(c.subsample_mode)},
                      {"subsample_rate", c.subsample_rate},
                      {"ridge", c.ridge},
                      {"bandwidth_rule", c.bandwidth_rule},
                      {"seed", c.seed}};
  if (c.criterion.scale != 1.0) j["criterion_scale"] = c.criterion.scale;
  return j;
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline FitConfig fit_config_from_json(const nlohmann::json& j) {
  require(j.is_object(), ErrorCode::kConfig, "config must be a JSON object");
  static const std::vector<std::string> known = {
      "criterion", "n_trees",        "min_leaf",       "balance_frac", "max_depth", "mtry",  "threshold_mode",
      "n_thresholds", "subsample_mode", "subsample_rate", "ridge",        "bandwidth_rule", "seed", "criterion_scale"};
  for (auto it = j.begin(); it != j.end(); ++it)
    require(std::find(known.begin(), known.end(), it.key()) != known.end(), ErrorCode::kConfig,
            "unknown config key '" + it.key() + "'");
  FitConfig c;
  try {
    if (j.contains("criterion")) c.criterion = parse_criterion(j.at("criterion").get<std::string>());
    c.criterion.scale = j.value("criterion_scale", 1.0);
    c.n_trees = j.value("n_trees", c.n_trees);
    c.min_leaf = j.value("min_leaf", c.min_leaf);
    c.balance_frac = j.value("balance_frac", c.balance_frac);
    c.max_depth = j.value("max_depth", c.max_depth);
    c.mtry = j.value("mtry", c.mtry);
    c.n_thresholds = j.value("n_thresholds", c.n_thresholds);
    c.subsample_rate = j.value("subsample_rate", c.subsample_rate);
    c.ridge = j.value("ridge", c.ridge);
    c.bandwidth_rule = j.value("bandwidth_rule", c.bandwidth_rule);
    c.seed = j.value("seed", c.seed);
    if (j.contains("threshold_mode")) {
      const std::string m = j.at("threshold_mode").get<std::string>();
      if (m == "all-midpoints") c.threshold_mode = ThresholdMode::kAllMidpoints;
      else if (m == "random") c.threshold_mode = ThresholdMode::kRandom;
      else fail(ErrorCode::kConfig, "unknown threshold_mode '" + m + "'");
    }
    if (j.contains("subsample_mode")) {
      const std::string m = j.at("subsample_mode").get<std::string>();
      if (m == "bootstrap") c.subsample_mode = SubsampleMode::kBootstrap;
      else if (m == "without-replacement") c.subsample_mode = SubsampleMode::kWithoutReplacement;
      else if (m == "honest") c.subsample_mode = SubsampleMode::kHonest;
      else fail(ErrorCode::kConfig, "unknown subsample_mode '" + m + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline constexpr int kForestFormatVersion = 1;

struct Forest {
  std::string problem_id;
  ProblemSpec problem;
  FitConfig config;
  std::vector<Tree> trees;
  std::vector<std::vector<int>> dec_sets;
  std::vector<std::vector<int>> tree_sets;

  int n_trees() const { return static_cast<int>(trees.size()); }
};

inline nlohmann::json to_json(const Forest& f) {
  nlohmann::json trees = nlohmann::json::array();
  for (const Tree& t : f.trees) trees.push_back(to_json(t));
  return {{"version", kForestFormatVersion},
          {"problem_id", f.problem_id},
          {"problem", to_json(f.problem)},
          {"config", to_json(f.config)},
          {"trees", trees},
          {"dec_sets", f.dec_sets},
          {"tree_sets", f.tree_sets}};
}

inline std::string serialize(const Forest& f) { return to_json(f).dump(); }

inline Forest forest_from_json(const nlohmann::json& j) {
  Forest f;
  try {
    require(j.at("version").get<int>() == kForestFormatVersion, ErrorCode::kData, "unsupported forest version");
    f.problem_id = j.at("problem_id").get<std::string>();
    f.problem = problem_from_json(j.at("problem"));
    f.config = fit_config_from_json(j.at("config"));
    for (const auto& t : j.at("trees")) f.trees.push_back(tree_from_json(t));
    f.dec_sets = j.at("dec_sets").get<std::vector<std::vector<int>>>();
    f.tree_sets = j.at("tree_sets").get<std::vector<std::vector<int>>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kData, std::string("forest: ") + e.what());
  }
  require(f.dec_sets.size() == f.trees.size() && f.tree_sets.size() == f.trees.size(), ErrorCode::kData,
          "forest: per-tree index sets do not match the tree count");
  return f;
}

inline void save_forest(const Forest& f, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kData, "cannot write " + path);
  out << serialize(f) << '\n';
}

inline Forest load_forest(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kData, "cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kData, std::string("forest: ") + e.what());
  }
  return forest_from_json(j);
}

}  // namespace sof
