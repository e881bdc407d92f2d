#pragma once

// Data ingestion and preparation: CSV loading with missing-output masks,
// train/test splitting with train-only standardization, the synthetic
// cos(4 ||x||) generator, per-point output masking, and the unsupervised
// concatenation y <- (x, y).

#include <Eigen/Core>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "nlgp/errors.hpp"
#include "nlgp/rng.hpp"

namespace nlgp::data {

struct Standardization {
  Eigen::VectorXd x_mean, x_std, y_mean, y_std;
  bool applied = false;
};

struct Dataset {
  Eigen::MatrixXd x;     // N x D_X (D_X may be zero for unsupervised data)
  Eigen::MatrixXd y;     // N x D_Y; masked entries may hold NaN
  Eigen::MatrixXd mask;  // N x D_Y of {0, 1}; 1 = observed
  Standardization stats;

  Eigen::Index n() const { return y.rows(); }
  Eigen::Index d_x() const { return x.cols(); }
  Eigen::Index d_y() const { return y.cols(); }

  // y with masked entries replaced by zero, safe to feed into arithmetic
  Eigen::MatrixXd y_clean() const {
    Eigen::MatrixXd out = y.cwiseProduct(mask);
    return out.unaryExpr([](double v) { return std::isfinite(v) ? v : 0.0; });
  }
};

struct SynthConfig {
  Eigen::Index n = 1000;
  Eigen::Index d_x = 5;
  Eigen::Index d_y = 8;
  double noise = 0.1;
  std::uint64_t seed = 0;
};

// inputs uniform in the unit ball (Gaussian direction, u^{1/d} radius),
// outputs cos(4 ||x||) in every dimension plus Gaussian noise
inline Dataset gen_synthetic(const SynthConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, 0x5eedu));
  Dataset ds;
  ds.x.resize(cfg.n, cfg.d_x);
  ds.y.resize(cfg.n, cfg.d_y);
  for (Eigen::Index i = 0; i < cfg.n; ++i) {
    Eigen::VectorXd dir = rng.normal_matrix(cfg.d_x, 1);
    double norm = dir.norm();
    if (norm == 0.0) norm = 1.0;
    double radius = std::pow(rng.uniform(), 1.0 / static_cast<double>(cfg.d_x));
    ds.x.row(i) = (radius / norm) * dir.transpose();
    const double g = std::cos(4.0 * ds.x.row(i).norm());
    for (Eigen::Index k = 0; k < cfg.d_y; ++k) ds.y(i, k) = g + cfg.noise * rng.normal();
  }
  ds.mask = Eigen::MatrixXd::Ones(cfg.n, cfg.d_y);
  return ds;
}

namespace detail {

inline bool parse_cell(const std::string& cell, double& out) {
  std::string t;
  for (char c : cell)
    if (!std::isspace(static_cast<unsigned char>(c))) t.push_back(c);
  if (t.empty() || t == "nan" || t == "NaN" || t == "NAN") {
    out = std::numeric_limits<double>::quiet_NaN();
    return true;
  }
  const char* begin = t.data();
  const char* end = begin + t.size();
  auto res = std::from_chars(begin, end, out);
  return res.ec == std::errc() && res.ptr == end;
}

}  // namespace detail

// CSV with a header row: the first d_x columns are inputs, the rest outputs.
// Empty cells or "nan" in output columns become masked entries.
inline Dataset load_csv(const std::string& path, Eigen::Index d_x) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("load_csv: empty file " + path);
  const auto count_cols = [](const std::string& s) {
    return static_cast<Eigen::Index>(std::count(s.begin(), s.end(), ',')) + 1;
  };
  const Eigen::Index cols = count_cols(line);
  if (d_x < 0 || d_x >= cols)
    throw ConfigError("load_csv: need 0 <= D_X < column count, got D_X=" +
                      std::to_string(d_x) + " with " + std::to_string(cols) + " columns");
  std::vector<std::vector<double>> rows;
  Eigen::Index line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double v;
      if (!detail::parse_cell(cell, v))
        throw ConfigError("load_csv: non-numeric cell '" + cell + "' at line " +
                          std::to_string(line_no));
      row.push_back(v);
    }
    if (!line.empty() && line.back() == ',') row.push_back(std::numeric_limits<double>::quiet_NaN());
    if (static_cast<Eigen::Index>(row.size()) != cols)
      throw ConfigError("load_csv: ragged row at line " + std::to_string(line_no));
    rows.push_back(std::move(row));
  }
  Dataset ds;
  const auto n = static_cast<Eigen::Index>(rows.size());
  ds.x.resize(n, d_x);
  ds.y.resize(n, cols - d_x);
  ds.mask = Eigen::MatrixXd::Ones(n, cols - d_x);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d_x; ++j) {
      if (!std::isfinite(rows[i][j]))
        throw ConfigError("load_csv: missing value in input column at line " +
                          std::to_string(i + 2));
      ds.x(i, j) = rows[i][j];
    }
    for (Eigen::Index k = d_x; k < cols; ++k) {
      ds.y(i, k - d_x) = rows[i][k];
      if (!std::isfinite(rows[i][k])) ds.mask(i, k - d_x) = 0.0;
    }
  }
  return ds;
}

inline void save_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw ConfigError("save_csv: cannot open " + path);
  out.precision(17);
  for (Eigen::Index j = 0; j < ds.d_x(); ++j) out << "x" << j << ",";
  for (Eigen::Index k = 0; k < ds.d_y(); ++k) out << "y" << k << (k + 1 < ds.d_y() ? "," : "\n");
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    for (Eigen::Index j = 0; j < ds.d_x(); ++j) out << ds.x(i, j) << ",";
    for (Eigen::Index k = 0; k < ds.d_y(); ++k) {
      if (ds.mask(i, k) == 0.0)
        out << "nan";
      else
        out << ds.y(i, k);
      out << (k + 1 < ds.d_y() ? "," : "\n");
    }
  }
}

namespace detail {

// column statistics over observed entries; constant columns get std 1
inline void column_stats(const Eigen::MatrixXd& m, const Eigen::MatrixXd* mask,
                         Eigen::VectorXd& mean, Eigen::VectorXd& std) {
  const Eigen::Index n = m.rows(), d = m.cols();
  mean.setZero(d);
  std.setOnes(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    double s = 0.0, count = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (mask && (*mask)(i, j) == 0.0) continue;
      s += m(i, j);
      count += 1.0;
    }
    if (count == 0.0) continue;
    mean(j) = s / count;
    double ss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (mask && (*mask)(i, j) == 0.0) continue;
      double c = m(i, j) - mean(j);
      ss += c * c;
    }
    double sd = std::sqrt(ss / count);
    std(j) = sd > 1e-12 ? sd : 1.0;
  }
}

inline void apply_standardization(Dataset& ds, const Standardization& st) {
  for (Eigen::Index j = 0; j < ds.d_x(); ++j)
    ds.x.col(j) = (ds.x.col(j).array() - st.x_mean(j)) / st.x_std(j);
  for (Eigen::Index k = 0; k < ds.d_y(); ++k)
    for (Eigen::Index i = 0; i < ds.n(); ++i)
      if (ds.mask(i, k) != 0.0) ds.y(i, k) = (ds.y(i, k) - st.y_mean(k)) / st.y_std(k);
  ds.stats = st;
  ds.stats.applied = true;
}

}  // namespace detail

// Seed-deterministic disjoint shuffle split. Standardization statistics are
// computed on the training part only and applied to both parts.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double test_fraction,
                                         std::uint64_t seed, bool standardize = true) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("split: test_fraction must be in (0, 1)");
  const Eigen::Index n = ds.n();
  const auto n_test = static_cast<Eigen::Index>(std::llround(test_fraction * n));
  if (n_test == 0 || n_test == n) throw ConfigError("split: degenerate sizes");
  Rng rng(derive_seed(seed, 0x51u));
  auto perm = rng.permutation(n);
  auto take = [&](Eigen::Index from, Eigen::Index count) {
    Dataset out;
    out.x.resize(count, ds.d_x());
    out.y.resize(count, ds.d_y());
    out.mask.resize(count, ds.d_y());
    for (Eigen::Index i = 0; i < count; ++i) {
      auto src = perm[static_cast<std::size_t>(from + i)];
      out.x.row(i) = ds.x.row(src);
      out.y.row(i) = ds.y.row(src);
      out.mask.row(i) = ds.mask.row(src);
    }
    return out;
  };
  Dataset test = take(0, n_test);
  Dataset train = take(n_test, n - n_test);
  if (standardize) {
    Standardization st;
    detail::column_stats(train.x, nullptr, st.x_mean, st.x_std);
    detail::column_stats(train.y, &train.mask, st.y_mean, st.y_std);
    detail::apply_standardization(train, st);
    detail::apply_standardization(test, st);
  }
  return {train, test};
}

// Mask exactly `missing` uniformly chosen output dimensions per datapoint.
inline Dataset mask_outputs(const Dataset& ds, Eigen::Index missing, std::uint64_t seed) {
  if (missing < 0 || missing >= ds.d_y())
    throw ConfigError("mask_outputs: need 0 <= missing < D_Y");
  Dataset out = ds;
  if (missing == 0) return out;
  Rng rng(derive_seed(seed, 0x35u));
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    auto perm = rng.permutation(ds.d_y());
    for (Eigen::Index j = 0; j < missing; ++j) out.mask(i, perm[static_cast<std::size_t>(j)]) = 0.0;
  }
  return out;
}

// y <- (x, y): the unsupervised construction. The new dataset has no inputs.
inline Dataset concat_unsupervised(const Dataset& ds) {
  if (ds.d_x() == 0) throw ConfigError("concat_unsupervised: dataset has no inputs");
  Dataset out;
  out.x.resize(ds.n(), 0);
  out.y.resize(ds.n(), ds.d_x() + ds.d_y());
  out.y << ds.x, ds.y;
  out.mask.resize(ds.n(), ds.d_x() + ds.d_y());
  out.mask << Eigen::MatrixXd::Ones(ds.n(), ds.d_x()), ds.mask;
  out.stats = ds.stats;
  return out;
}

}  // namespace nlgp::data
