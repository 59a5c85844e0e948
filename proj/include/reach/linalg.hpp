#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

#include "reach/scalar.hpp"

// Small dense row-major matrices and vectors. Dimensions in this project are
// modest (state dims up to ~76, hidden layers up to 96), so plain loops are
// fast enough and keep the whole stack templatable on the scalar type.

namespace reach {

template <class S> using Vec = std::vector<S>;

template <class S>
struct Mat {
  int rows = 0, cols = 0;
  std::vector<S> a;  // row-major

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, S(0.0)) {}

  S& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  const S& operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = S(1.0);
    return m;
  }
  static Mat diagonal(const Vec<S>& d) {
    Mat m(static_cast<int>(d.size()), static_cast<int>(d.size()));
    for (size_t i = 0; i < d.size(); ++i) m(static_cast<int>(i), static_cast<int>(i)) = d[i];
    return m;
  }
};

template <class S>
Vec<S> matvec(const Mat<S>& m, const Vec<S>& x) {
  assert(static_cast<int>(x.size()) == m.cols);
  Vec<S> y(m.rows, S(0.0));
  for (int i = 0; i < m.rows; ++i) {
    S acc(0.0);
    const S* row = &m.a[static_cast<size_t>(i) * m.cols];
    for (int j = 0; j < m.cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
  return y;
}

template <class S>
Mat<S> matmul(const Mat<S>& a, const Mat<S>& b) {
  assert(a.cols == b.rows);
  Mat<S> c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int k = 0; k < a.cols; ++k) {
      S aik = a(i, k);
      for (int j = 0; j < b.cols; ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

template <class S>
Vec<S> vadd(const Vec<S>& x, const Vec<S>& y) {
  assert(x.size() == y.size());
  Vec<S> z(x.size());
  for (size_t i = 0; i < x.size(); ++i) z[i] = x[i] + y[i];
  return z;
}

template <class S>
Vec<S> vsub(const Vec<S>& x, const Vec<S>& y) {
  assert(x.size() == y.size());
  Vec<S> z(x.size());
  for (size_t i = 0; i < x.size(); ++i) z[i] = x[i] - y[i];
  return z;
}

template <class S>
Vec<S> vscale(S a, const Vec<S>& x) {
  Vec<S> z(x.size());
  for (size_t i = 0; i < x.size(); ++i) z[i] = a * x[i];
  return z;
}

template <class S>
S dot(const Vec<S>& x, const Vec<S>& y) {
  assert(x.size() == y.size());
  S acc(0.0);
  for (size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

// Solves A X = B for square A by Gaussian elimination with partial pivoting.
// Returns false (leaving X unspecified) when a pivot falls below pivot_tol.
template <class S>
bool mat_solve(Mat<S> a, Mat<S> b, Mat<S>& x, double pivot_tol = 1e-12) {
  using std::abs;
  assert(a.rows == a.cols && b.rows == a.rows);
  int n = a.rows, m = b.cols;
  for (int k = 0; k < n; ++k) {
    int piv = k;
    double best = value(abs(a(k, k)));
    for (int i = k + 1; i < n; ++i) {
      double cand = value(abs(a(i, k)));
      if (cand > best) {
        best = cand;
        piv = i;
      }
    }
    if (!(best > pivot_tol)) return false;
    if (piv != k) {
      for (int j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
      for (int j = 0; j < m; ++j) std::swap(b(k, j), b(piv, j));
    }
    for (int i = k + 1; i < n; ++i) {
      S f = a(i, k) / a(k, k);
      for (int j = k; j < n; ++j) a(i, j) -= f * a(k, j);
      for (int j = 0; j < m; ++j) b(i, j) -= f * b(k, j);
    }
  }
  x = Mat<S>(n, m);
  for (int i = n - 1; i >= 0; --i)
    for (int j = 0; j < m; ++j) {
      S acc = b(i, j);
      for (int k = i + 1; k < n; ++k) acc -= a(i, k) * x(k, j);
      x(i, j) = acc / a(i, i);
    }
  return true;
}

// Sum of absolute values of one matrix row; bounds |row . z| over the unit box.
template <class S>
S row_abs_sum(const Mat<S>& m, int i) {
  using std::abs;
  S acc(0.0);
  for (int j = 0; j < m.cols; ++j) acc += abs(m(i, j));
  return acc;
}

template <class S>
Vec<S> to_scalar(const Vec<double>& x) {
  Vec<S> y(x.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] = S(x[i]);
  return y;
}

inline Vec<double> to_double(const Vec<double>& x) { return x; }
inline Vec<double> to_double(const Vec<Dual>& x) {
  Vec<double> y(x.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] = x[i].v;
  return y;
}

}  // namespace reach
