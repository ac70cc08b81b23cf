#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "refertok/errors.hpp"
#include "refertok/rng.hpp"

namespace refertok {

using Vec = std::vector<double>;
using TokenList = std::vector<Vec>;

// Row-major dense matrix. Vectors multiply from the left: y = x * M,
// so rows() is the input dimension and cols() the output dimension.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }

  static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c); }

  // Entries uniform in [-scale, scale), generated row-major from the seed.
  static Matrix random(std::size_t r, std::size_t c, std::uint64_t seed,
                       double scale = 1.0) {
    Matrix m(r, c);
    DetRng rng(seed);
    for (double& v : m.data) v = scale * rng.next_signed();
    return m;
  }
};

inline Vec random_vec(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  Vec v(n);
  DetRng rng(seed);
  for (double& x : v) x = scale * rng.next_signed();
  return v;
}

// y = x * M + b. b may be empty (treated as zero).
inline Vec affine(const Vec& x, const Matrix& m, const Vec& b = {}) {
  if (x.size() != m.rows)
    raise(ErrorKind::DimMismatch, "affine: input dim " + std::to_string(x.size()) +
                                      " vs matrix rows " + std::to_string(m.rows));
  if (!b.empty() && b.size() != m.cols)
    raise(ErrorKind::DimMismatch, "affine: bias dim mismatch");
  Vec y(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double xr = x[r];
    const double* row = m.data.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) y[c] += xr * row[c];
  }
  if (!b.empty())
    for (std::size_t c = 0; c < m.cols; ++c) y[c] += b[c];
  return y;
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_distance(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline Vec add(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

}  // namespace refertok
