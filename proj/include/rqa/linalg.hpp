#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace rqa {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

// y += alpha * x
inline void add_scaled(Vec& y, double alpha, const Vec& x) {
  assert(y.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline bool all_finite(const Vec& a) {
  for (double x : a) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// Dense row-major matrix; small enough here that hand-rolled kernels beat
// pulling in a linear algebra dependency.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) {
    return data[r * cols + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  bool empty() const { return data.empty(); }
};

// M x
inline Vec matvec(const Matrix& m, const Vec& x) {
  assert(x.size() == m.cols);
  Vec y(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    double s = 0.0;
    const double* row = m.data.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) s += row[c] * x[c];
    y[r] = s;
  }
  return y;
}

// M^T y
inline Vec matTvec(const Matrix& m, const Vec& y) {
  assert(y.size() == m.rows);
  Vec x(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.data.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) x[c] += row[c] * y[r];
  }
  return x;
}

// M += alpha * u v^T
inline void add_outer(Matrix& m, double alpha, const Vec& u, const Vec& v) {
  assert(u.size() == m.rows && v.size() == m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    double* row = m.data.data() + r * m.cols;
    const double au = alpha * u[r];
    for (std::size_t c = 0; c < m.cols; ++c) row[c] += au * v[c];
  }
}

inline double frobenius_squared(const Matrix& m) {
  double s = 0.0;
  for (double x : m.data) s += x * x;
  return s;
}

}  // namespace rqa
