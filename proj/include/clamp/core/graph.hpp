// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "clamp/core/param_store.hpp"
#include "clamp/core/rng.hpp"
#include "clamp/core/tensor.hpp"

namespace clamp::core {

// node handle shared by all graph instantiations
using Id = int;

// Eager tape. Each op computes its value immediately and records a backward
// closure; backward() walks the tape in reverse. Nodes reached only through
// non-trainable leaves never allocate gradients, so frozen parameters get
// exactly-zero entries and inference subgraphs cost no backward work.
template <class Real>
class GraphT {
 public:
  using Id = core::Id;

  GraphT() = default;
  explicit GraphT(ParamStoreT<Real>* store) : store_(store) {}

  ParamStoreT<Real>* store() { return store_; }

  // ---- leaves ----
  Id input(TensorT<Real> t) {
    Node n;
    n.value = std::move(t);
    return push(std::move(n));
  }

  Id param(const std::string& name) {
    if (!store_) fail("param", "graph has no parameter store");
    auto it = param_ids_.find(name);
    if (it != param_ids_.end()) return it->second;
    Node n;
    n.value = store_->get(name);
    n.needs_grad = store_->trainable(name);
    n.pname = name;
    Id id = push(std::move(n));
    param_ids_[name] = id;
    return id;
  }

  // ---- elementwise binary ----
  Id add(Id a, Id b) { return ew2("add", a, b, [](Real x, Real y) { return x + y; },
                                  [](Real, Real, Real g) { return std::pair<Real, Real>{g, g}; }); }
  Id sub(Id a, Id b) { return ew2("sub", a, b, [](Real x, Real y) { return x - y; },
                                  [](Real, Real, Real g) { return std::pair<Real, Real>{g, -g}; }); }
  Id mul(Id a, Id b) {
    return ew2("mul", a, b, [](Real x, Real y) { return x * y; },
               [](Real x, Real y, Real g) { return std::pair<Real, Real>{g * y, g * x}; });
  }

  // ---- elementwise unary ----
  Id scale(Id a, Real c) {
    return ew1("scale", a, [c](Real x) { return c * x; }, [c](Real, Real, Real g) { return c * g; });
  }
  Id add_const(Id a, Real c) {
    return ew1("add_const", a, [c](Real x) { return x + c; },
               [](Real, Real, Real g) { return g; });
  }
  Id relu(Id a) {
    return ew1("relu", a, [](Real x) { return x > Real(0) ? x : Real(0); },
               [](Real x, Real, Real g) { return x > Real(0) ? g : Real(0); });
  }
  Id gelu(Id a) {
    return ew1("gelu", a,
               [](Real x) {
                 return Real(0.5) * x * (Real(1) + Real(std::erf(double(x) * 0.70710678118654752440)));
               },
               [](Real x, Real, Real g) {
                 double xd = double(x);
                 double cdf = 0.5 * (1.0 + std::erf(xd * 0.70710678118654752440));
                 double pdf = std::exp(-0.5 * xd * xd) / std::sqrt(6.283185307179586477);
                 return Real(g * Real(cdf + xd * pdf));
               });
  }
  Id tanh_(Id a) {
    return ew1("tanh", a, [](Real x) { return Real(std::tanh(double(x))); },
               [](Real, Real y, Real g) { return g * (Real(1) - y * y); });
  }
  Id sigmoid_(Id a) {
    return ew1("sigmoid", a,
               [](Real x) { return Real(1) / (Real(1) + Real(std::exp(-double(x)))); },
               [](Real, Real y, Real g) { return g * y * (Real(1) - y); });
  }
  Id exp_(Id a) {
    return ew1("exp", a, [](Real x) { return Real(std::exp(double(x))); },
               [](Real, Real y, Real g) { return g * y; });
  }
  Id log_(Id a) {
    return ew1("log", a, [](Real x) { return Real(std::log(double(x))); },
               [](Real x, Real, Real g) { return g / x; });
  }
  // log(1+e^x) in the overflow-safe form
  Id softplus(Id a) {
    return ew1("softplus", a,
               [](Real x) {
                 double xd = double(x);
                 return Real(std::max(xd, 0.0) + std::log1p(std::exp(-std::fabs(xd))));
               },
               [](Real x, Real, Real g) {
                 return Real(double(g) / (1.0 + std::exp(-double(x))));
               });
  }
  Id square(Id a) {
    return ew1("square", a, [](Real x) { return x * x; },
               [](Real x, Real, Real g) { return Real(2) * g * x; });
  }

  // Inverted-dropout with a counter-derived mask; p = 0 is the identity.
  Id dropout(Id a, double p, const CounterRng& rng, const std::string& tag) {
    if (p <= 0.0) return a;
    if (p >= 1.0) fail("dropout", "rate must be < 1");
    auto& av = val(a);
    std::vector<uint8_t> mask(av.data.size());
    const uint64_t stream = fnv1a64("dropout/" + tag);
    for (size_t i = 0; i < mask.size(); ++i)
      mask[i] = rng.uniform(stream, static_cast<uint64_t>(i)) >= p ? 1 : 0;
    Real keep = Real(1.0 / (1.0 - p));
    Node n;
    n.value = av;
    for (size_t i = 0; i < mask.size(); ++i)
      n.value.data[i] = mask[i] ? n.value.data[i] * keep : Real(0);
    n.needs_grad = needs(a);
    Id id = push(std::move(n));
    if (needs(a))
      set_back(id, [this, id, a, mask, keep]() {
        auto& g = grad_of(id);
        auto& ga = grad_acc(a);
        for (size_t i = 0; i < mask.size(); ++i)
          if (mask[i]) ga.data[i] += g.data[i] * keep;
      });
    return id;
  }

  // ---- scalar broadcast (s is a 1-element node) ----
  Id scale_by(Id x, Id s) {
    auto& xv = val(x);
    auto& sv = val(s);
    if (sv.numel() != 1) fail("scale_by", "scale must be a scalar, got " + shape_str(sv.shape));
    Node n;
    n.value = xv;
    Real sc = sv.data[0];
    for (auto& v : n.value.data) v *= sc;
    n.needs_grad = needs(x) || needs(s);
    Id id = push(std::move(n));
    if (n_[id].needs_grad)
      set_back(id, [this, id, x, s, sc]() {
        auto& g = grad_of(id);
        auto& xv2 = val(x);
        if (needs(x)) {
          auto& gx = grad_acc(x);
          for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i] * sc;
        }
        if (needs(s)) {
          Real acc = Real(0);
          for (size_t i = 0; i < g.data.size(); ++i) acc += g.data[i] * xv2.data[i];
          grad_acc(s).data[0] += acc;
        }
      });
    return id;
  }

  Id shift_by(Id x, Id s) {
    auto& xv = val(x);
    auto& sv = val(s);
    if (sv.numel() != 1) fail("shift_by", "shift must be a scalar, got " + shape_str(sv.shape));
    Node n;
    n.value = xv;
    Real sc = sv.data[0];
    for (auto& v : n.value.data) v += sc;
    n.needs_grad = needs(x) || needs(s);
    Id id = push(std::move(n));
    if (n_[id].needs_grad)
      set_back(id, [this, id, x, s]() {
        auto& g = grad_of(id);
        if (needs(x)) {
          auto& gx = grad_acc(x);
          for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
        }
        if (needs(s)) {
          Real acc = Real(0);
          for (Real v : g.data) acc += v;
          grad_acc(s).data[0] += acc;
        }
      });
    return id;
  }

  // y[r,:] = x[r,:] + b  (b rank-1 of length cols)
  Id add_bias(Id x, Id b) {
    auto& xv = val(x);
    auto& bv = val(b);
    if (bv.numel() != xv.cols())
      fail("add_bias", "bias length " + shape_str(bv.shape) + " vs matrix " + shape_str(xv.shape));
    Node n;
    n.value = xv;
    int r = xv.rows(), c = xv.cols();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) n.value.data[static_cast<size_t>(i) * c + j] += bv.data[j];
    n.needs_grad = needs(x) || needs(b);
    Id id = push(std::move(n));
    if (n_[id].needs_grad)
      set_back(id, [this, id, x, b, r, c]() {
        auto& g = grad_of(id);
        if (needs(x)) {
          auto& gx = grad_acc(x);
          for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
        }
        if (needs(b)) {
          auto& gb = grad_acc(b);
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) gb.data[j] += g.data[static_cast<size_t>(i) * c + j];
        }
      });
    return id;
  }

  // ---- linear algebra ----
  Id matmul(Id a, Id b) {
    auto& av = val(a);
    auto& bv = val(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0])
      fail("matmul", "inner dims mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
    int m = av.shape[0], k = av.shape[1], nn = bv.shape[1];
    Node n;
    n.value = TensorT<Real>({m, nn});
    matmul_nn(av.data.data(), bv.data.data(), n.value.data.data(), m, k, nn);
    n.needs_grad = needs(a) || needs(b);
    Id id = push(std::move(n));
    if (n_[id].needs_grad)
      set_back(id, [this, id, a, b, m, k, nn]() {
        auto& g = grad_of(id);
        auto& av2 = val(a);
        auto& bv2 = val(b);
        if (needs(a))  // dA += G * B^T
          matmul_nt(g.data.data(), bv2.data.data(), grad_acc(a).data.data(), m, nn, k, true);
        if (needs(b))  // dB += A^T * G
          matmul_tn(av2.data.data(), g.data.data(), grad_acc(b).data.data(), k, m, nn, true);
      });
    return id;
  }

  Id transpose(Id a) {
    auto& av = val(a);
    if (av.rank() != 2) fail("transpose", "expects a matrix, got " + shape_str(av.shape));
    int r = av.shape[0], c = av.shape[1];
    Node n;
    n.value = TensorT<Real>({c, r});
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) n.value.at(j, i) = av.at(i, j);
    n.needs_grad = needs(a);
    Id id = push(std::move(n));
    if (needs(a))
      set_back(id, [this, id, a, r, c]() {
        auto& g = grad_of(id);
        auto& ga = grad_acc(a);
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) ga.at(i, j) += g.at(j, i);
      });
    return id;
  }

  // Gaussian elimination with partial pivoting; throws on numerically
  // singular input, reporting the pivot ratio as a crude condition estimate.
  Id inverse(Id a) {
    auto& av = val(a);
    if (av.rank() != 2 || av.shape[0] != av.shape[1])
      fail("inverse", "expects a square matrix, got " + shape_str(av.shape));
    Node n;
    n.value = invert_matrix(av);
    n.needs_grad = needs(a);
    Id id = push(std::move(n));
    if (needs(a))
      set_back(id, [this, id, a]() {
        // dA = -Y^T G Y^T with Y = A^{-1}
        auto& g = grad_of(id);
        auto& y = val(id);
        int d = y.shape[0];
        TensorT<Real> yt({d, d});
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) yt.at(i, j) = y.at(j, i);
        TensorT<Real> tmp({d, d});
        matmul_nn(yt.data.data(), g.data.data(), tmp.data.data(), d, d, d);
        TensorT<Real> res({d, d});
        matmul_nn(tmp.data.data(), yt.data.data(), res.data.data(), d, d, d);
        auto& ga = grad_acc(a);
        for (int64_t i = 0; i < res.numel(); ++i) ga.data[i] -= res.data[i];
      });
    return id;
  }

  static TensorT<Real> invert_matrix(const TensorT<Real>& av) {
    int d = av.shape[0];
    std::vector<double> m(static_cast<size_t>(d) * 2 * d, 0.0);
    auto M = [&](int i, int j) -> double& { return m[static_cast<size_t>(i) * 2 * d + j]; };
    double max_abs = 0.0;
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        M(i, j) = double(av.at(i, j));
        max_abs = std::max(max_abs, std::fabs(M(i, j)));
      }
      M(i, d + i) = 1.0;
    }
    double min_pivot = std::numeric_limits<double>::infinity();
    for (int col = 0; col < d; ++col) {
      int piv = col;
      for (int i = col + 1; i < d; ++i)
        if (std::fabs(M(i, col)) > std::fabs(M(piv, col))) piv = i;
      if (piv != col)
        for (int j = 0; j < 2 * d; ++j) std::swap(M(col, j), M(piv, j));
      double p = M(col, col);
      min_pivot = std::min(min_pivot, std::fabs(p));
      if (std::fabs(p) < 1e-300 || std::fabs(p) < 1e-14 * std::max(max_abs, 1.0)) {
        std::ostringstream os;
        os << "matrix is numerically singular (|pivot| " << std::fabs(p)
           << ", max |entry| " << max_abs << ", cond >~ " << (max_abs / std::max(std::fabs(p), 1e-300))
           << ")";
        fail("inverse", os.str());
      }
      double inv = 1.0 / p;
      for (int j = 0; j < 2 * d; ++j) M(col, j) *= inv;
      for (int i = 0; i < d; ++i) {
        if (i == col) continue;
        double f = M(i, col);
        if (f == 0.0) continue;
        for (int j = 0; j < 2 * d; ++j) M(i, j) -= f * M(col, j);
      }
    }
    TensorT<Real> out({d, d});
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) out.at(i, j) = Real(M(i, d + j));
    return out;
  }

  // ---- shape ----
  Id reshape(Id a, std::vector<int> shape) {
    auto& av = val(a);
    if (TensorT<Real>::count(shape) != av.numel())
      fail("reshape", "cannot reshape " + shape_str(av.shape) + " to " + shape_str(shape));
    Node n;
    n.value = av;
    n.value.shape = shape;
    n.needs_grad = needs(a);
    Id id = push(std::move(n));
    if (needs(a))
      set_back(id, [this, id, a]() {
        auto& g = grad_of(id);
        auto& ga = grad_acc(a);
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
      });
    return id;
  }

  Id slice_rows(Id a, int r0, int r1) {
    auto& av = val(a);
    if (av.rank() != 2 || r0 < 0 || r1 > av.shape[0] || r0 >= r1)
      fail("slice_rows", "bad range [" + std::to_string(r0) + "," + std::to_string(r1) +
                             ") on " + shape_str(av.shape));
    int c = av.shape[1];
    Node n;
    n.value = TensorT<Real>({r1 - r0, c});
    std::copy(av.data.begin() + static_cast<size_t>(r0) * c,
              av.data.begin() + static_cast<size_t>(r1) * c, n.value.data.begin());
    n.needs_grad = needs(a);
    Id id = push(std::move(n));
    if (needs(a))
      set_back(id, [this, id, a, r0, c]() {
        auto& g = grad_of(id);
        auto& ga = grad_acc(a);
        for (size_t i = 0; i < g.data.size(); ++i)
          ga.data[static_cast<size_t>(r0) * c + i] += g.data[i];
      });
    return id;
  }

  Id slice_cols(Id a, int c0, int c1) {
    auto& av = val(a);
    if (av.rank() != 2 || c0 < 0 || c1 > av.shape[1] || c0 >= c1)
      fail("slice_cols", "bad range [" + std::to_string(c0) + "," + std::to_string(c1) +
                             ") on " + shape_str(av.shape));
    int r = av.shape[0], c = av.shape[1], w = c1 - c0;
    Node n;
    n.value = TensorT<Real>({r, w});
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < w; ++j) n.value.at(i, j) = av.at(i, c0 + j);
    n.needs_grad = needs(a);
    Id id = push(std::move(n));
    if (needs(a))
      set_back(id, [this, id, a, r, c, c0, w]() {
        auto& g = grad_of(id);
        auto& ga = grad_acc(a);
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < w; ++j) ga.data[static_cast<size_t>(i) * c + c0 + j] += g.at(i, j);
      });
    return id;
  }

  Id concat_rows(const std::vector<Id>& parts) {
    if (parts.empty()) fail("concat_rows", "no inputs");
    int c = val(parts[0]).cols();
    int r = 0;
    bool ng = false;
    for (Id p : parts) {
      auto& pv = val(p);
      if (pv.rank() > 2 || pv.cols() != c)
        fail("concat_rows", "column mismatch: " + shape_str(pv.shape) + " expected cols " +
                                std::to_string(c));
      r += pv.rows();
      ng = ng || needs(p);
    }
    Node n;
    n.value = TensorT<Real>({r, c});
    int off = 0;
    for (Id p : parts) {
      auto& pv = val(p);
      std::copy(pv.data.begin(), pv.data.end(),
                n.value.data.begin() + static_cast<size_t>(off) * c);
      off += pv.rows();
    }
    n.needs_grad = ng;
    Id id = push(std::move(n));
    if (ng)
      set_back(id, [this, id, parts, c]() {
        auto& g = grad_of(id);
        int off2 = 0;
        for (Id p : parts) {
          int pr = val(p).rows();
          if (needs(p)) {
            auto& gp = grad_acc(p);
            for (int64_t i = 0; i < static_cast<int64_t>(pr) * c; ++i)
              gp.data[i] += g.data[static_cast<size_t>(off2) * c + i];
          }
          off2 += pr;
        }
      });
    return id;
  }

  Id concat_cols(const std::vector<Id>& parts) {
    if (parts.empty()) fail("concat_cols", "no inputs");
    int r = val(parts[0]).rows();
    int c = 0;
    bool ng = false;
    for (Id p : parts) {
      auto& pv = val(p);
      if (pv.rank() > 2 || pv.rows() != r)
        fail("concat_cols", "row mismatch: " + shape_str(pv.shape));
      c += pv.cols();
      ng = ng || needs(p);
    }
    Node n;
    n.value = TensorT<Real>({r, c});
    int off = 0;
    for (Id p : parts) {
      auto& pv = val(p);
      int pc = pv.cols();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < pc; ++j) n.value.at(i, off + j) = pv.at(i, j);
      off += pc;
    }
    n.needs_grad = ng;
    Id id = push(std::move(n));
    if (ng)
      set_back(id, [this, id, parts, r, c]() {
        auto& g = grad_of(id);
        int off2 = 0;
        for (Id p : parts) {
          int pc = val(p).cols();
          if (needs(p)) {
            auto& gp = grad_acc(p);
            for (int i = 0; i < r; ++i)
              for (int j = 0; j < pc; ++j)
                gp.data[static_cast<size_t>(i) * pc + j] += g.data[static_cast<size_t>(i) * c + off2 + j];
          }
          off2 += pc;
        }
      });
    return id;
  }

  // ---- reductions / row normalizations ----
  Id sum(Id a) {
    auto& av = val(a);
    Real s = Real(0);
    for (Real v : av.data) s += v;
    Node n;
    n.value = TensorT<Real>::scalar(s);
    n.needs_grad = needs(a);
    Id id = push(std::move(n));
    if (needs(a))
      set_back(id, [this, id, a]() {
        Real g = grad_of(id).data[0];
        auto& ga = grad_acc(a);
        for (auto& v : ga.data) v += g;
      });
    return id;
  }

  Id mean(Id a) {
    auto& av = val(a);
    if (av.numel() == 0) fail("mean", "empty tensor");
    Real s = Real(0);
    for (Real v : av.data) s += v;
    Real inv = Real(1) / Real(av.numel());
    Node n;
    n.value = TensorT<Real>::scalar(s * inv);
    n.needs_grad = needs(a);
    Id id = push(std::move(n));
    if (needs(a))
      set_back(id, [this, id, a, inv]() {
        Real g = grad_of(id).data[0] * inv;
        auto& ga = grad_acc(a);
        for (auto& v : ga.data) v += g;
      });
    return id;
  }

  Id softmax_rows(Id a) {
    auto& av = val(a);
    int r = av.rows(), c = av.cols();
    Node n;
    n.value = av;
    for (int i = 0; i < r; ++i) {
      Real* row = n.value.data.data() + static_cast<size_t>(i) * c;
      Real m = row[0];
      for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
      Real s = Real(0);
      for (int j = 0; j < c; ++j) {
        row[j] = Real(std::exp(double(row[j] - m)));
        s += row[j];
      }
      Real inv = Real(1) / s;
      for (int j = 0; j < c; ++j) row[j] *= inv;
    }
    n.needs_grad = needs(a);
    Id id = push(std::move(n));
    if (needs(a))
      set_back(id, [this, id, a, r, c]() {
        auto& g = grad_of(id);
        auto& y = val(id);
        auto& ga = grad_acc(a);
        for (int i = 0; i < r; ++i) {
          const Real* yr = y.data.data() + static_cast<size_t>(i) * c;
          const Real* gr = g.data.data() + static_cast<size_t>(i) * c;
          Real dot = Real(0);
          for (int j = 0; j < c; ++j) dot += yr[j] * gr[j];
          Real* gar = ga.data.data() + static_cast<size_t>(i) * c;
          for (int j = 0; j < c; ++j) gar[j] += yr[j] * (gr[j] - dot);
        }
      });
    return id;
  }

  Id layer_norm(Id x, Id gain, Id bias, Real eps = Real(1e-5)) {
    auto& xv = val(x);
    int r = xv.rows(), c = xv.cols();
    auto& gv = val(gain);
    auto& bv = val(bias);
    if (gv.numel() != c || bv.numel() != c)
      fail("layer_norm", "gain/bias length must equal cols of " + shape_str(xv.shape));
    Node n;
    n.value = TensorT<Real>({r, c});
    std::vector<Real> inv_std(r), xhat(static_cast<size_t>(r) * c);
    for (int i = 0; i < r; ++i) {
      const Real* row = xv.data.data() + static_cast<size_t>(i) * c;
      Real mu = Real(0);
      for (int j = 0; j < c; ++j) mu += row[j];
      mu /= Real(c);
      Real var = Real(0);
      for (int j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
      var /= Real(c);
      Real is = Real(1) / Real(std::sqrt(double(var + eps)));
      inv_std[i] = is;
      for (int j = 0; j < c; ++j) {
        Real xh = (row[j] - mu) * is;
        xhat[static_cast<size_t>(i) * c + j] = xh;
        n.value.at(i, j) = xh * gv.data[j] + bv.data[j];
      }
    }
    n.needs_grad = needs(x) || needs(gain) || needs(bias);
    Id id = push(std::move(n));
    if (n_[id].needs_grad)
      set_back(id, [this, id, x, gain, bias, r, c, inv_std, xhat]() {
        auto& g = grad_of(id);
        auto& gv2 = val(gain);
        if (needs(gain)) {
          auto& gg = grad_acc(gain);
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
              gg.data[j] += g.at(i, j) * xhat[static_cast<size_t>(i) * c + j];
        }
        if (needs(bias)) {
          auto& gb = grad_acc(bias);
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) gb.data[j] += g.at(i, j);
        }
        if (needs(x)) {
          auto& gx = grad_acc(x);
          for (int i = 0; i < r; ++i) {
            const Real* gr = g.data.data() + static_cast<size_t>(i) * c;
            const Real* xh = xhat.data() + static_cast<size_t>(i) * c;
            Real m1 = Real(0), m2 = Real(0);
            for (int j = 0; j < c; ++j) {
              Real dxh = gr[j] * gv2.data[j];
              m1 += dxh;
              m2 += dxh * xh[j];
            }
            m1 /= Real(c);
            m2 /= Real(c);
            for (int j = 0; j < c; ++j) {
              Real dxh = gr[j] * gv2.data[j];
              gx.data[static_cast<size_t>(i) * c + j] += (dxh - m1 - xh[j] * m2) * inv_std[i];
            }
          }
        }
      });
    return id;
  }

  Id l2_normalize_rows(Id a, Real eps = Real(1e-12)) {
    auto& av = val(a);
    int r = av.rows(), c = av.cols();
    Node n;
    n.value = TensorT<Real>({r, c});
    std::vector<Real> inv_norm(r);
    for (int i = 0; i < r; ++i) {
      const Real* row = av.data.data() + static_cast<size_t>(i) * c;
      Real ss = Real(0);
      for (int j = 0; j < c; ++j) ss += row[j] * row[j];
      Real inv = Real(1) / Real(std::sqrt(double(ss + eps)));
      inv_norm[i] = inv;
      for (int j = 0; j < c; ++j) n.value.at(i, j) = row[j] * inv;
    }
    n.needs_grad = needs(a);
    Id id = push(std::move(n));
    if (needs(a))
      set_back(id, [this, id, a, r, c, inv_norm]() {
        auto& g = grad_of(id);
        auto& xv = val(a);
        auto& ga = grad_acc(a);
        for (int i = 0; i < r; ++i) {
          const Real* gr = g.data.data() + static_cast<size_t>(i) * c;
          const Real* xr = xv.data.data() + static_cast<size_t>(i) * c;
          Real dot = Real(0);
          for (int j = 0; j < c; ++j) dot += gr[j] * xr[j];
          Real in = inv_norm[i];
          Real in3 = in * in * in;
          for (int j = 0; j < c; ++j)
            ga.data[static_cast<size_t>(i) * c + j] += gr[j] * in - xr[j] * dot * in3;
        }
      });
    return id;
  }

  // ---- indexing ----
  Id gather_rows(Id table, std::vector<int> ids) {
    auto& tv = val(table);
    if (tv.rank() != 2) fail("gather_rows", "table must be a matrix, got " + shape_str(tv.shape));
    int c = tv.shape[1];
    for (int i : ids)
      if (i < 0 || i >= tv.shape[0])
        fail("gather_rows", "row " + std::to_string(i) + " out of range for " + shape_str(tv.shape));
    Node n;
    n.value = TensorT<Real>({static_cast<int>(ids.size()), c});
    for (size_t i = 0; i < ids.size(); ++i)
      std::copy(tv.data.begin() + static_cast<size_t>(ids[i]) * c,
                tv.data.begin() + static_cast<size_t>(ids[i] + 1) * c,
                n.value.data.begin() + i * c);
    n.needs_grad = needs(table);
    Id id = push(std::move(n));
    if (needs(table))
      set_back(id, [this, id, table, ids, c]() {
        auto& g = grad_of(id);
        auto& gt = grad_acc(table);
        for (size_t i = 0; i < ids.size(); ++i)
          for (int j = 0; j < c; ++j)
            gt.data[static_cast<size_t>(ids[i]) * c + j] += g.data[i * c + j];
      });
    return id;
  }

  // Unfold (h*w, c) image rows into (oh*ow, k*k*c) patches for strided valid
  // convolution via matmul.
  Id im2col(Id x, int h, int w, int c, int k, int stride) {
    auto& xv = val(x);
    if (xv.rank() != 2 || xv.shape[0] != h * w || xv.shape[1] != c)
      fail("im2col", "expected (" + std::to_string(h * w) + "," + std::to_string(c) + "), got " +
                         shape_str(xv.shape));
    if (k > h || k > w || stride < 1) fail("im2col", "kernel larger than input");
    int oh = (h - k) / stride + 1, ow = (w - k) / stride + 1;
    Node n;
    n.value = TensorT<Real>({oh * ow, k * k * c});
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        Real* dst = n.value.data.data() + (static_cast<size_t>(oy) * ow + ox) * k * k * c;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const Real* src =
                xv.data.data() +
                (static_cast<size_t>(oy * stride + ky) * w + (ox * stride + kx)) * c;
            std::copy(src, src + c, dst + (static_cast<size_t>(ky) * k + kx) * c);
          }
      }
    n.needs_grad = needs(x);
    Id id = push(std::move(n));
    if (needs(x))
      set_back(id, [this, id, x, h, w, c, k, stride, oh, ow]() {
        auto& g = grad_of(id);
        auto& gx = grad_acc(x);
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            const Real* src = g.data.data() + (static_cast<size_t>(oy) * ow + ox) * k * k * c;
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                Real* dst = gx.data.data() +
                            (static_cast<size_t>(oy * stride + ky) * w + (ox * stride + kx)) * c;
                const Real* s2 = src + (static_cast<size_t>(ky) * k + kx) * c;
                for (int ch = 0; ch < c; ++ch) dst[ch] += s2[ch];
              }
          }
      });
    return id;
  }

  // Rotary block rotation: row i of x (n x d, d even) is rotated pairwise by
  // angles theta_k = freq[k,:] . coords[i,:]. Gradients flow to x and freq.
  Id rope_rows(Id x, Id freq, TensorT<Real> coords) {
    auto& xv = val(x);
    auto& fv = val(freq);
    int nrows = xv.rows(), d = xv.cols();
    if (d % 2 != 0) fail("rope_rows", "feature dim must be even, got " + shape_str(xv.shape));
    int half = d / 2;
    int cdim = coords.cols();
    if (fv.rank() != 2 || fv.shape[0] != half || fv.shape[1] != cdim)
      fail("rope_rows", "freq must be (" + std::to_string(half) + "," + std::to_string(cdim) +
                            "), got " + shape_str(fv.shape));
    if (coords.rows() != nrows)
      fail("rope_rows", "coords rows " + shape_str(coords.shape) + " vs x " + shape_str(xv.shape));
    Node n;
    n.value = TensorT<Real>({nrows, d});
    std::vector<Real> cs(static_cast<size_t>(nrows) * half), sn(static_cast<size_t>(nrows) * half);
    for (int i = 0; i < nrows; ++i) {
      const Real* cr = coords.data.data() + static_cast<size_t>(i) * cdim;
      for (int kk = 0; kk < half; ++kk) {
        double th = 0;
        for (int a2 = 0; a2 < cdim; ++a2) th += double(fv.at(kk, a2)) * double(cr[a2]);
        Real cth = Real(std::cos(th)), sth = Real(std::sin(th));
        cs[static_cast<size_t>(i) * half + kk] = cth;
        sn[static_cast<size_t>(i) * half + kk] = sth;
        Real x0 = xv.at(i, 2 * kk), x1 = xv.at(i, 2 * kk + 1);
        n.value.at(i, 2 * kk) = cth * x0 - sth * x1;
        n.value.at(i, 2 * kk + 1) = sth * x0 + cth * x1;
      }
    }
    n.needs_grad = needs(x) || needs(freq);
    Id id = push(std::move(n));
    if (n_[id].needs_grad)
      set_back(id, [this, id, x, freq, coords, nrows, half, cdim, cs, sn]() {
        auto& g = grad_of(id);
        auto& xv2 = val(x);
        for (int i = 0; i < nrows; ++i) {
          for (int kk = 0; kk < half; ++kk) {
            Real c0 = cs[static_cast<size_t>(i) * half + kk];
            Real s0 = sn[static_cast<size_t>(i) * half + kk];
            Real g0 = g.at(i, 2 * kk), g1 = g.at(i, 2 * kk + 1);
            if (needs(x)) {
              auto& gx = grad_acc(x);
              gx.at(i, 2 * kk) += c0 * g0 + s0 * g1;
              gx.at(i, 2 * kk + 1) += -s0 * g0 + c0 * g1;
            }
            if (needs(freq)) {
              Real x0 = xv2.at(i, 2 * kk), x1 = xv2.at(i, 2 * kk + 1);
              // d/dtheta of (c x0 - s x1, s x0 + c x1)
              Real dth = g0 * (-s0 * x0 - c0 * x1) + g1 * (c0 * x0 - s0 * x1);
              auto& gf = grad_acc(freq);
              const Real* cr = coords.data.data() + static_cast<size_t>(i) * cdim;
              for (int a2 = 0; a2 < cdim; ++a2) gf.at(kk, a2) += dth * cr[a2];
            }
          }
        }
      });
    return id;
  }

  Id mse(Id a, Id b) {
    auto& av = val(a);
    auto& bv = val(b);
    if (!av.same_shape(bv))
      fail("mse", "shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
    double acc = 0;
    for (size_t i = 0; i < av.data.size(); ++i) {
      double d = double(av.data[i]) - double(bv.data[i]);
      acc += d * d;
    }
    Real inv = Real(1) / Real(av.numel());
    Node n;
    n.value = TensorT<Real>::scalar(Real(acc) * inv);
    n.needs_grad = needs(a) || needs(b);
    Id id = push(std::move(n));
    if (n_[id].needs_grad)
      set_back(id, [this, id, a, b, inv]() {
        Real g = grad_of(id).data[0];
        auto& av2 = val(a);
        auto& bv2 = val(b);
        Real k = Real(2) * g * inv;
        if (needs(a)) {
          auto& ga = grad_acc(a);
          for (size_t i = 0; i < av2.data.size(); ++i)
            ga.data[i] += k * (av2.data[i] - bv2.data[i]);
        }
        if (needs(b)) {
          auto& gb = grad_acc(b);
          for (size_t i = 0; i < av2.data.size(); ++i)
            gb.data[i] -= k * (av2.data[i] - bv2.data[i]);
        }
      });
    return id;
  }

  // mean of scalar nodes, fixed left-fold order
  Id mean_of(const std::vector<Id>& xs) {
    if (xs.empty()) fail("mean_of", "no inputs");
    Id acc = xs[0];
    for (size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
    return scale(acc, Real(1) / Real(xs.size()));
  }

  // ---- access / backward ----
  const TensorT<Real>& value(Id id) const { return n_[check(id)].value; }
  Real scalar_value(Id id) const {
    auto& v = n_[check(id)].value;
    if (v.numel() != 1) fail("scalar_value", "node is not scalar: " + shape_str(v.shape));
    return v.data[0];
  }

  void backward(Id root) {
    auto& rv = n_[check(root)].value;
    if (rv.numel() != 1)
      fail("backward", "output must be scalar, got " + shape_str(rv.shape));
    if (!n_[root].needs_grad) return;  // nothing trainable upstream
    grad_acc(root).data[0] = Real(1);
    for (Id i = root; i >= 0; --i) {
      Node& nd = n_[i];
      if (nd.back && nd.needs_grad && !nd.grad.data.empty()) nd.back();
    }
  }

  bool has_grad(Id id) const { return !n_[check(id)].grad.data.empty(); }
  const TensorT<Real>& grad(Id id) {
    Node& nd = n_[check(id)];
    if (nd.grad.data.empty()) {
      nd.grad = TensorT<Real>(nd.value.shape);  // zeros: node unreached or frozen
    }
    return nd.grad;
  }

  // One entry per store parameter; frozen or unused parameters get zeros.
  std::map<std::string, TensorT<Real>> param_gradients() {
    if (!store_) fail("param_gradients", "graph has no parameter store");
    std::map<std::string, TensorT<Real>> out;
    for (auto& [name, e] : store_->entries()) {
      auto it = param_ids_.find(name);
      if (it != param_ids_.end() && has_grad(it->second))
        out.emplace(name, n_[it->second].grad);
      else
        out.emplace(name, TensorT<Real>(e.value.shape));
    }
    return out;
  }

  size_t size() const { return n_.size(); }

 private:
  struct Node {
    TensorT<Real> value;
    TensorT<Real> grad;
    bool needs_grad = false;
    std::function<void()> back;
    std::string pname;
  };

  Id check(Id id) const {
    if (id < 0 || static_cast<size_t>(id) >= n_.size()) fail("graph", "bad node id");
    return id;
  }
  bool needs(Id id) const { return n_[check(id)].needs_grad; }
  TensorT<Real>& val(Id id) { return n_[check(id)].value; }
  TensorT<Real>& grad_of(Id id) { return n_[check(id)].grad; }
  TensorT<Real>& grad_acc(Id id) {
    Node& nd = n_[check(id)];
    if (nd.grad.data.empty()) nd.grad = TensorT<Real>(nd.value.shape);
    return nd.grad;
  }
  Id push(Node n) {
    n_.push_back(std::move(n));
    return static_cast<Id>(n_.size() - 1);
  }
  void set_back(Id id, std::function<void()> f) { n_[id].back = std::move(f); }

  template <class FwdF, class BwdF>
  Id ew1(const char* opname, Id a, FwdF fwd, BwdF bwd) {
    auto& av = val(a);
    (void)opname;
    Node n;
    n.value = TensorT<Real>(av.shape);
    for (size_t i = 0; i < av.data.size(); ++i) n.value.data[i] = fwd(av.data[i]);
    n.needs_grad = needs(a);
    Id id = push(std::move(n));
    if (needs(a))
      set_back(id, [this, id, a, bwd]() {
        auto& g = grad_of(id);
        auto& y = val(id);
        auto& xv = val(a);
        auto& ga = grad_acc(a);
        for (size_t i = 0; i < g.data.size(); ++i)
          ga.data[i] += bwd(xv.data[i], y.data[i], g.data[i]);
      });
    return id;
  }

  template <class FwdF, class BwdF>
  Id ew2(const char* opname, Id a, Id b, FwdF fwd, BwdF bwd) {
    auto& av = val(a);
    auto& bv = val(b);
    if (!av.same_shape(bv))
      fail(opname, "shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
    Node n;
    n.value = TensorT<Real>(av.shape);
    for (size_t i = 0; i < av.data.size(); ++i) n.value.data[i] = fwd(av.data[i], bv.data[i]);
    n.needs_grad = needs(a) || needs(b);
    Id id = push(std::move(n));
    if (n_[id].needs_grad)
      set_back(id, [this, id, a, b, bwd]() {
        auto& g = grad_of(id);
        auto& av2 = val(a);
        auto& bv2 = val(b);
        bool na = needs(a), nb = needs(b);
        TensorT<Real>* ga = na ? &grad_acc(a) : nullptr;
        TensorT<Real>* gb = nb ? &grad_acc(b) : nullptr;
        for (size_t i = 0; i < g.data.size(); ++i) {
          auto [da, db] = bwd(av2.data[i], bv2.data[i], g.data[i]);
          if (na) ga->data[i] += da;
          if (nb) gb->data[i] += db;
        }
      });
    return id;
  }

  std::vector<Node> n_;
  std::map<std::string, Id> param_ids_;
  ParamStoreT<Real>* store_ = nullptr;
};

using Graph64 = GraphT<double>;
using Graph32 = GraphT<float>;

}  // namespace clamp::core
