#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "gcopt/errors.hpp"

namespace gcopt {

/// Dense row-major 2-D array of doubles. The single value type shared by
/// features, parameters and autodiff intermediates.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

  std::size_t size() const { return a.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double x : a)
      if (!std::isfinite(x)) return false;
    return true;
  }

  static Matrix scalar(double v) {
    Matrix m(1, 1);
    m.a[0] = v;
    return m;
  }

  static Matrix from_column(const std::vector<double>& col) {
    Matrix m(static_cast<int>(col.size()), 1);
    m.a = col;
    return m;
  }

  std::vector<double> column(int j) const {
    std::vector<double> out(rows);
    for (int i = 0; i < rows; ++i) out[i] = (*this)(i, j);
    return out;
  }
};

inline void check_same_shape(const Matrix& x, const Matrix& y, const char* op) {
  if (!x.same_shape(y))
    throw shape_error(std::string(op) + ": shape mismatch (" + std::to_string(x.rows) + "x" +
                      std::to_string(x.cols) + " vs " + std::to_string(y.rows) + "x" +
                      std::to_string(y.cols) + ")");
}

/// C = A * B, naive triple loop in ikj order.
inline Matrix matmul(const Matrix& x, const Matrix& y) {
  if (x.cols != y.rows)
    throw shape_error("matmul: inner dimensions differ (" + std::to_string(x.cols) + " vs " +
                      std::to_string(y.rows) + ")");
  Matrix out(x.rows, y.cols);
  for (int i = 0; i < x.rows; ++i) {
    const double* xi = &x.a[static_cast<std::size_t>(i) * x.cols];
    double* oi = &out.a[static_cast<std::size_t>(i) * y.cols];
    for (int k = 0; k < x.cols; ++k) {
      const double v = xi[k];
      if (v == 0.0) continue;
      const double* yk = &y.a[static_cast<std::size_t>(k) * y.cols];
      for (int j = 0; j < y.cols; ++j) oi[j] += v * yk[j];
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& x) {
  Matrix out(x.cols, x.rows);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) out(j, i) = x(i, j);
  return out;
}

inline double max_abs_diff(const Matrix& x, const Matrix& y) {
  check_same_shape(x, y, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < x.a.size(); ++i) m = std::max(m, std::fabs(x.a[i] - y.a[i]));
  return m;
}

}  // namespace gcopt
