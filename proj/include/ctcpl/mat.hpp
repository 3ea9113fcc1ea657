// ctcpl/mat.hpp

// Copyright 2026  ctcpl authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef CTCPL_MAT_HPP_
#define CTCPL_MAT_HPP_

#include <cmath>
#include <cstdint>
#include <vector>

#include "ctcpl/common.hpp"

namespace ctcpl {

// Dense row-major double matrix. All in-memory math runs in f64; the f32
// container formats snap values on write paths instead.
struct Mat {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int64_t r, int64_t c, double fill = 0.0)
      : rows(r), cols(c), v(static_cast<size_t>(r * c), fill) {}

  double& operator()(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols + c)]; }
  double operator()(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols + c)]; }

  double* row(int64_t r) { return v.data() + r * cols; }
  const double* row(int64_t r) const { return v.data() + r * cols; }

  int64_t size() const { return rows * cols; }
  bool empty() const { return v.empty(); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  void snap_to_f32() {
    for (double& x : v) x = snap_f32(x);
  }

  bool operator==(const Mat& o) const { return rows == o.rows && cols == o.cols && v == o.v; }
};

inline Mat zeros_like(const Mat& m) { return Mat(m.rows, m.cols); }

// c += a * b
inline void matmul_acc(const Mat& a, const Mat& b, Mat& c) {
  if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
    throw Error(strprintf("matmul: shape mismatch (%lld x %lld)*(%lld x %lld)->(%lld x %lld)",
                          (long long)a.rows, (long long)a.cols, (long long)b.rows,
                          (long long)b.cols, (long long)c.rows, (long long)c.cols));
  for (int64_t i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (int64_t k = 0; k < a.cols; ++k) {
      double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b.row(k);
      for (int64_t j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
    }
  }
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.cols);
  matmul_acc(a, b, c);
  return c;
}

// c += a * b^T
inline void matmul_nt_acc(const Mat& a, const Mat& b, Mat& c) {
  if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows)
    throw Error("matmul_nt: shape mismatch");
  for (int64_t i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (int64_t j = 0; j < b.rows; ++j) {
      const double* bj = b.row(j);
      double s = 0.0;
      for (int64_t k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
      ci[j] += s;
    }
  }
}

inline Mat matmul_nt(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.rows);
  matmul_nt_acc(a, b, c);
  return c;
}

// c += a^T * b
inline void matmul_tn_acc(const Mat& a, const Mat& b, Mat& c) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
    throw Error("matmul_tn: shape mismatch");
  for (int64_t k = 0; k < a.rows; ++k) {
    const double* ak = a.row(k);
    const double* bk = b.row(k);
    for (int64_t i = 0; i < a.cols; ++i) {
      double aki = ak[i];
      if (aki == 0.0) continue;
      double* ci = c.row(i);
      for (int64_t j = 0; j < b.cols; ++j) ci[j] += aki * bk[j];
    }
  }
}

inline double logsumexp2(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  double m = a > b ? a : b;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double logsumexp_row(const double* p, int64_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (int64_t i = 0; i < n; ++i) m = std::max(m, p[i]);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += std::exp(p[i] - m);
  return m + std::log(s);
}

}  // namespace ctcpl

#endif  // CTCPL_MAT_HPP_
