// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "clamp/core/parallel.hpp"

namespace clamp::core {

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

[[noreturn]] inline void fail(const std::string& op, const std::string& msg) {
  throw std::runtime_error(op + ": " + msg);
}

// Dense row-major tensor. Rank is free for storage, but graph ops treat
// everything as scalars {1}, vectors {n} or matrices {r,c}.
template <class Real>
struct TensorT {
  std::vector<int> shape;
  std::vector<Real> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(count(shape)), Real(0));
  }
  TensorT(std::vector<int> s, std::vector<Real> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != count(shape))
      fail("tensor", "data size does not match shape " + shape_str(shape));
  }

  static int64_t count(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d < 0) fail("tensor", "negative dim in shape " + shape_str(s));
      n *= d;
    }
    return n;
  }

  static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s)); }
  static TensorT full(std::vector<int> s, Real v) {
    TensorT t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }
  static TensorT scalar(Real v) { return TensorT({1}, {v}); }
  static TensorT row(std::vector<Real> d) {
    int n = static_cast<int>(d.size());
    return TensorT({n}, std::move(d));
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  // matrix view: scalars are 1x1, vectors 1xn
  int rows() const {
    if (shape.size() <= 1) return 1;
    if (shape.size() == 2) return shape[0];
    fail("tensor", "rows() on rank>2 tensor " + shape_str(shape));
  }
  int cols() const {
    if (shape.empty()) return 1;
    if (shape.size() == 1) return shape[0];
    if (shape.size() == 2) return shape[1];
    fail("tensor", "cols() on rank>2 tensor " + shape_str(shape));
  }

  Real& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  Real at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }
  Real& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  Real operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  template <class R2>
  TensorT<R2> cast() const {
    TensorT<R2> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<R2>(data[i]);
    return out;
  }

  bool all_finite() const {
    for (Real v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

using Tensor64 = TensorT<double>;
using Tensor32 = TensorT<float>;

// ---- matmul kernels ----------------------------------------------------
// C (m x n) = A (m x k) * B (k x n), optionally accumulating into C.
// Parallel version splits rows of C; per-row arithmetic order matches the
// serial twin exactly, so outputs are bit-identical.

template <class Real>
inline void matmul_nn_serial(const Real* A, const Real* B, Real* C, int m, int k, int n,
                             bool accumulate = false) {
  for (int i = 0; i < m; ++i) {
    Real* c = C + static_cast<size_t>(i) * n;
    if (!accumulate)
      for (int j = 0; j < n; ++j) c[j] = Real(0);
    const Real* a = A + static_cast<size_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      Real av = a[l];
      const Real* b = B + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

template <class Real>
inline void matmul_nn(const Real* A, const Real* B, Real* C, int m, int k, int n,
                      bool accumulate = false) {
  parallel_for(m, [&](int64_t i) {
    Real* c = C + static_cast<size_t>(i) * n;
    if (!accumulate)
      for (int j = 0; j < n; ++j) c[j] = Real(0);
    const Real* a = A + static_cast<size_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      Real av = a[l];
      const Real* b = B + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  });
}

// C (m x n) = A (m x k) * B^T where B is (n x k)
namespace detail {
// one output row of A * B^T; shared by the parallel and serial entry points
// so both produce bit-identical results
template <class Real>
inline void nt_row(const Real* a, const Real* B, Real* c, int k, int n, bool accumulate) {
  for (int j = 0; j < n; ++j) {
    const Real* b = B + static_cast<size_t>(j) * k;
    Real s = Real(0);
    for (int l = 0; l < k; ++l) s += a[l] * b[l];
    if (accumulate)
      c[j] += s;
    else
      c[j] = s;
  }
}
}  // namespace detail

template <class Real>
inline void matmul_nt(const Real* A, const Real* B, Real* C, int m, int k, int n,
                      bool accumulate = false) {
  parallel_for(m, [&](int64_t i) {
    detail::nt_row(A + static_cast<size_t>(i) * k, B, C + static_cast<size_t>(i) * n, k, n,
                   accumulate);
  });
}

template <class Real>
inline void matmul_nt_serial(const Real* A, const Real* B, Real* C, int m, int k, int n,
                             bool accumulate = false) {
  for (int64_t i = 0; i < m; ++i)
    detail::nt_row(A + static_cast<size_t>(i) * k, B, C + static_cast<size_t>(i) * n, k, n,
                   accumulate);
}

// C (m x n) = A^T * B where A is (k x m), B is (k x n)
template <class Real>
inline void matmul_tn(const Real* A, const Real* B, Real* C, int m, int k, int n,
                      bool accumulate = false) {
  parallel_for(m, [&](int64_t i) {
    Real* c = C + static_cast<size_t>(i) * n;
    if (!accumulate)
      for (int j = 0; j < n; ++j) c[j] = Real(0);
    for (int l = 0; l < k; ++l) {
      Real av = A[static_cast<size_t>(l) * m + i];
      const Real* b = B + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  });
}

template <class Real>
inline TensorT<Real> matmul(const TensorT<Real>& a, const TensorT<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    fail("matmul", "expects matrices, got " + shape_str(a.shape) + " and " + shape_str(b.shape));
  if (a.shape[1] != b.shape[0])
    fail("matmul", "inner dims mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  TensorT<Real> c({a.shape[0], b.shape[1]});
  matmul_nn(a.data.data(), b.data.data(), c.data.data(), a.shape[0], a.shape[1], b.shape[1]);
  return c;
}

template <class Real>
inline TensorT<Real> matmul_serial(const TensorT<Real>& a, const TensorT<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
    fail("matmul_serial", "bad shapes " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  TensorT<Real> c({a.shape[0], b.shape[1]});
  matmul_nn_serial(a.data.data(), b.data.data(), c.data.data(), a.shape[0], a.shape[1],
                   b.shape[1]);
  return c;
}

}  // namespace clamp::core
