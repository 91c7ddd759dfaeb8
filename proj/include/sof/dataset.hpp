// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "sof/error.hpp"

namespace sof {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Paired covariate/outcome samples. Rows of X and Y are aligned.
struct Dataset {
  RowMatrix X;  // n x p
  RowMatrix Y;  // n x d

  int n() const { return static_cast<int>(X.rows()); }
  int p() const { return static_cast<int>(X.cols()); }
  int d() const { return static_cast<int>(Y.cols()); }

  std::span<const double> x(int i) const { return {X.data() + static_cast<std::ptrdiff_t>(i) * X.cols(), static_cast<size_t>(X.cols())}; }
  std::span<const double> y(int i) const { return {Y.data() + static_cast<std::ptrdiff_t>(i) * Y.cols(), static_cast<size_t>(Y.cols())}; }
};

inline Dataset make_dataset(RowMatrix X, RowMatrix Y) {
  require(X.rows() == Y.rows(), ErrorCode::kDimensionMismatch,
          "X has " + std::to_string(X.rows()) + " rows, Y has " + std::to_string(Y.rows()));
  require(X.rows() > 0, ErrorCode::kEmpty, "dataset has no rows");
  require(X.allFinite() && Y.allFinite(), ErrorCode::kNonFinite, "dataset contains NaN or Inf");
  return Dataset{std::move(X), std::move(Y)};
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\"");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\"");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Reads a CSV whose header names columns x_1..x_p and y_1..y_d (any order).
inline Dataset read_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kData, "cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::kData, "empty file " + path);
  auto header = detail::split_csv_line(line);
  std::vector<int> xcol, ycol;
  std::vector<int> xidx, yidx;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    std::string h = detail::trim(header[c]);
    if (h.size() > 2 && (h[0] == 'x' || h[0] == 'y') && h[1] == '_') {
      int k = std::atoi(h.c_str() + 2);
      require(k >= 1, ErrorCode::kData, "bad column name " + h);
      (h[0] == 'x' ? xcol : ycol).push_back(c);
      (h[0] == 'x' ? xidx : yidx).push_back(k - 1);
    }
  }
  require(!xcol.empty() && !ycol.empty(), ErrorCode::kData, "header must contain x_* and y_* columns");
  const int p = static_cast<int>(xcol.size()), d = static_cast<int>(ycol.size());
  for (int k : xidx) require(k < p, ErrorCode::kData, "x columns must be x_1..x_p");
  for (int k : yidx) require(k < d, ErrorCode::kData, "y columns must be y_1..y_d");
  std::vector<double> xs, ys;
  int n = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    require(cells.size() == header.size(), ErrorCode::kData, "row " + std::to_string(n + 1) + " has wrong column count");
    std::vector<double> xr(p), yr(d);
    auto parse = [&](int c) {
      std::string s = detail::trim(cells[c]);
      char* end = nullptr;
      double v = std::strtod(s.c_str(), &end);
      require(!s.empty() && end && *end == '\0', ErrorCode::kData, "unparseable value '" + s + "'");
      return v;
    };
    for (int j = 0; j < p; ++j) xr[xidx[j]] = parse(xcol[j]);
    for (int j = 0; j < d; ++j) yr[yidx[j]] = parse(ycol[j]);
    xs.insert(xs.end(), xr.begin(), xr.end());
    ys.insert(ys.end(), yr.begin(), yr.end());
    ++n;
  }
  require(n > 0, ErrorCode::kData, "no data rows in " + path);
  RowMatrix X = Eigen::Map<RowMatrix>(xs.data(), n, p);
  RowMatrix Y = Eigen::Map<RowMatrix>(ys.data(), n, d);
  try {
    return make_dataset(std::move(X), std::move(Y));
  } catch (const Error& e) {
    fail(ErrorCode::kData, e.what());
  }
}

/// Reads the x_1..x_p columns of a CSV; other columns are ignored.
inline RowMatrix read_features_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kData, "cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::kData, "empty file " + path);
  auto header = detail::split_csv_line(line);
  std::vector<int> col;
  std::vector<int> idx;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    std::string h = detail::trim(header[c]);
    if (h.size() > 2 && h[0] == 'x' && h[1] == '_') {
      col.push_back(c);
      idx.push_back(std::atoi(h.c_str() + 2) - 1);
    }
  }
  const int p = static_cast<int>(col.size());
  require(p > 0, ErrorCode::kData, "header must contain x_* columns");
  for (int k : idx) require(k >= 0 && k < p, ErrorCode::kData, "x columns must be x_1..x_p");
  std::vector<double> xs;
  int n = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    require(cells.size() == header.size(), ErrorCode::kData, "row " + std::to_string(n + 1) + " has wrong column count");
    std::vector<double> xr(p);
    for (int j = 0; j < p; ++j) {
      std::string s = detail::trim(cells[col[j]]);
      char* end = nullptr;
      xr[idx[j]] = std::strtod(s.c_str(), &end);
      require(!s.empty() && end && *end == '\0', ErrorCode::kData, "unparseable value '" + s + "'");
      require(std::isfinite(xr[idx[j]]), ErrorCode::kData, "non-finite feature value");
    }
    xs.insert(xs.end(), xr.begin(), xr.end());
    ++n;
  }
  require(n > 0, ErrorCode::kData, "no data rows in " + path);
  return Eigen::Map<RowMatrix>(xs.data(), n, p);
}

inline void write_csv(const Dataset& ds, std::ostream& out) {
  for (int j = 0; j < ds.p(); ++j) out << (j ? "," : "") << "x_" << j + 1;
  for (int j = 0; j < ds.d(); ++j) out << ",y_" << j + 1;
  out << '\n' << std::setprecision(17);
  for (int i = 0; i < ds.n(); ++i) {
    for (int j = 0; j < ds.p(); ++j) out << (j ? "," : "") << ds.X(i, j);
    for (int j = 0; j < ds.d(); ++j) out << ',' << ds.Y(i, j);
    out << '\n';
  }
}

inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kData, "cannot write " + path);
  write_csv(ds, out);
}

}  // namespace sof
