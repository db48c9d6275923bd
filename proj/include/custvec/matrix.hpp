#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "custvec/common.hpp"

namespace custvec {

/// Dense row-major matrix of doubles. The networks in this library are tiny
/// (tens of units), so a flat vector with inline accessors is all we need.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data.data() + i * cols, cols);
  }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// y = M x
inline std::vector<double> matvec(const Matrix& m, std::span<const double> x) {
  if (x.size() != m.cols) throw ValidationError("matvec: dimension mismatch");
  std::vector<double> y(m.rows, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* row = m.data.data() + i * m.cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
  return y;
}

// y = M^T x
inline std::vector<double> matvec_transposed(const Matrix& m, std::span<const double> x) {
  if (x.size() != m.rows) throw ValidationError("matvec_transposed: dimension mismatch");
  std::vector<double> y(m.cols, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* row = m.data.data() + i * m.cols;
    for (std::size_t j = 0; j < m.cols; ++j) y[j] += row[j] * x[i];
  }
  return y;
}

// acc += scale * a b^T
inline void add_outer(Matrix& acc, std::span<const double> a, std::span<const double> b,
                      double scale = 1.0) {
  for (std::size_t i = 0; i < acc.rows; ++i) {
    double* row = acc.data.data() + i * acc.cols;
    double ai = scale * a[i];
    for (std::size_t j = 0; j < acc.cols; ++j) row[j] += ai * b[j];
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace custvec
