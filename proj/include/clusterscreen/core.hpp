#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace clusterscreen {

// Input could not be read or does not have the expected shape/content.
class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A configuration value is out of its domain.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An internal consistency check failed.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Dense row-major matrix of doubles. Rows are points, columns are features.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : init) {
      if (r.size() != cols_) throw std::invalid_argument("Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != m.cols_) throw std::invalid_argument("Matrix: ragged rows");
      std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
    }
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  const std::vector<double>& data() const noexcept { return data_; }

  // Rows picked by index, in the given order.
  Matrix select_rows(std::span<const std::size_t> idx) const {
    Matrix out(idx.size(), cols_);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto src = row(idx[r]);
      std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Standardized point set fed to every clustering algorithm.
using FeatureMatrix = Matrix;

// Cluster id per point; -1 marks DBSCAN noise.
using Assignment = std::vector<int>;

// Binary ground truth / mapped prediction: 1 = ASD, 0 = NO.
using BinaryLabels = std::vector<int>;

inline constexpr int kNoise = -1;

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

inline double distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

// Relabels non-noise ids to 0..m-1 in order of first appearance; -1 stays -1.
inline Assignment canonicalize(const Assignment& a) {
  std::unordered_map<int, int> seen;
  Assignment out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == kNoise) {
      out[i] = kNoise;
      continue;
    }
    auto [it, inserted] = seen.try_emplace(a[i], static_cast<int>(seen.size()));
    out[i] = it->second;
  }
  return out;
}

}  // namespace clusterscreen
