// SPDX-License-Identifier: Apache-2.0
#include "clamp/stringpe/string_encoding.hpp"

#include <cmath>

#include "clamp/core/graph.hpp"
#include "clamp/core/parallel.hpp"
#include "clamp/core/rng.hpp"

namespace clamp::stringpe {

StringParams StringParams::init(int d_qk, uint64_t seed, double gen_scale) {
  if (d_qk <= 0 || d_qk % 2 != 0) core::fail("string_params", "d_QK must be positive and even");
  StringParams p;
  p.skew_gen = Tensor64({d_qk, d_qk});
  if (gen_scale > 0.0) {
    core::CounterRng rng(seed);
    for (int64_t i = 0; i < p.skew_gen.numel(); ++i)
      p.skew_gen[i] = gen_scale * rng.normal("string/gen", i);
  }
  int l = d_qk / 2;
  p.freq = Tensor64({l, 3});
  for (int k = 0; k < l; ++k)
    p.freq.at(k, k % 3) = std::pow(10.0, -4.0 * k / double(l));
  return p;
}

Tensor64 skew_from_generator(const Tensor64& gen) {
  if (gen.rank() != 2 || gen.shape[0] != gen.shape[1])
    core::fail("skew_from_generator", "generator must be square, got " + core::shape_str(gen.shape));
  int d = gen.shape[0];
  Tensor64 s({d, d});
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) s.at(i, j) = gen.at(i, j) - gen.at(j, i);
  return s;
}

Tensor64 cayley_from_skew(const Tensor64& S) {
  int d = S.shape[0];
  Tensor64 ips({d, d}), ims({d, d});
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      double e = i == j ? 1.0 : 0.0;
      ips.at(i, j) = e + S.at(i, j);
      ims.at(i, j) = e - S.at(i, j);
    }
  Tensor64 inv = core::Graph64::invert_matrix(ips);  // throws with condition report if singular
  return core::matmul(ims, inv);
}

Tensor64 cayley_orthogonal(const StringParams& p) {
  return cayley_from_skew(skew_from_generator(p.skew_gen));
}

std::vector<double> rope_rotate(const std::vector<double>& v, const Vec3& coord,
                                const Tensor64& freq) {
  int d = static_cast<int>(v.size());
  if (d % 2 != 0) core::fail("rope_rotate", "vector dim must be even");
  int l = d / 2;
  if (freq.rank() != 2 || freq.shape[0] != l || freq.shape[1] != 3)
    core::fail("rope_rotate", "freq must be (" + std::to_string(l) + ",3), got " +
                                  core::shape_str(freq.shape));
  std::vector<double> out(v.size());
  for (int k = 0; k < l; ++k) {
    double th = freq.at(k, 0) * coord[0] + freq.at(k, 1) * coord[1] + freq.at(k, 2) * coord[2];
    double c = std::cos(th), s = std::sin(th);
    out[2 * k] = c * v[2 * k] - s * v[2 * k + 1];
    out[2 * k + 1] = s * v[2 * k] + c * v[2 * k + 1];
  }
  return out;
}

namespace {

std::vector<double> mat_vec_t(const Tensor64& P, const std::vector<double>& v) {
  // P^T v
  int d = P.shape[0];
  std::vector<double> out(static_cast<size_t>(d), 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) out[j] += P.at(i, j) * v[i];
  return out;
}

std::vector<double> mat_vec(const Tensor64& P, const std::vector<double>& v) {
  int d = P.shape[0];
  std::vector<double> out(static_cast<size_t>(d), 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) out[i] += P.at(i, j) * v[j];
  return out;
}

bool all_zero(const Tensor64& t) {
  for (double v : t.data)
    if (v != 0.0) return false;
  return true;
}

// rows of X mapped to rows of (X P) then rotated per-row by coords
void encode_rows(const Tensor64& X, const Tensor64& coords, const Tensor64& P,
                 const Tensor64& freq, Tensor64& out, bool parallel) {
  int n = X.shape[0], d = X.shape[1], l = d / 2;
  Tensor64 XP({n, d});
  if (parallel)
    core::matmul_nn(X.data.data(), P.data.data(), XP.data.data(), n, d, d);
  else
    core::matmul_nn_serial(X.data.data(), P.data.data(), XP.data.data(), n, d, d);
  auto rotate_row = [&](int64_t i) {
    const double* cr = coords.data.data() + static_cast<size_t>(i) * 3;
    for (int k = 0; k < l; ++k) {
      double th = freq.at(k, 0) * cr[0] + freq.at(k, 1) * cr[1] + freq.at(k, 2) * cr[2];
      double c = std::cos(th), s = std::sin(th);
      double x0 = XP.at(static_cast<int>(i), 2 * k), x1 = XP.at(static_cast<int>(i), 2 * k + 1);
      out.at(static_cast<int>(i), 2 * k) = c * x0 - s * x1;
      out.at(static_cast<int>(i), 2 * k + 1) = s * x0 + c * x1;
    }
  };
  if (parallel)
    core::parallel_for(n, rotate_row);
  else
    for (int64_t i = 0; i < n; ++i) rotate_row(i);
}

Tensor64 attention_scores_impl(const Tensor64& Q, const Tensor64& K, const Tensor64& coords,
                               const StringParams& p, bool parallel) {
  if (Q.rank() != 2 || K.rank() != 2 || Q.shape != K.shape)
    core::fail("attention_scores",
               "Q/K shape mismatch " + core::shape_str(Q.shape) + " vs " + core::shape_str(K.shape));
  int n = Q.shape[0], d = Q.shape[1];
  if (coords.rank() != 2 || coords.shape[0] != n || coords.shape[1] != 3)
    core::fail("attention_scores", "coords must be (" + std::to_string(n) + ",3), got " +
                                       core::shape_str(coords.shape));
  if (d != p.dim() || d % 2 != 0)
    core::fail("attention_scores", "params dim " + std::to_string(p.dim()) +
                                       " incompatible with Q " + core::shape_str(Q.shape));
  Tensor64 scores({n, n});
  auto qkt = [&](const Tensor64& A, const Tensor64& B) {
    if (parallel)
      core::matmul_nt(A.data.data(), B.data.data(), scores.data.data(), n, d, n);
    else
      core::matmul_nt_serial(A.data.data(), B.data.data(), scores.data.data(), n, d, n);
  };
  if (all_zero(p.freq)) {
    // identity rotations: P R P^T collapses to I, so compute Q K^T directly
    qkt(Q, K);
    return scores;
  }
  Tensor64 P = cayley_orthogonal(p);
  Tensor64 Qe({n, d}), Ke({n, d});
  encode_rows(Q, coords, P, p.freq, Qe, parallel);
  encode_rows(K, coords, P, p.freq, Ke, parallel);
  qkt(Qe, Ke);
  return scores;
}

}  // namespace

std::vector<double> apply_string(const std::vector<double>& v, const Vec3& coord,
                                 const StringParams& p) {
  if (static_cast<int>(v.size()) != p.dim())
    core::fail("apply_string", "vector dim " + std::to_string(v.size()) + " vs params dim " +
                                   std::to_string(p.dim()));
  Tensor64 P = cayley_orthogonal(p);
  return mat_vec(P, rope_rotate(mat_vec_t(P, v), coord, p.freq));
}

Tensor64 attention_scores(const Tensor64& Q, const Tensor64& K, const Tensor64& coords,
                          const StringParams& p) {
  return attention_scores_impl(Q, K, coords, p, true);
}
Tensor64 attention_scores_serial(const Tensor64& Q, const Tensor64& K, const Tensor64& coords,
                                 const StringParams& p) {
  return attention_scores_impl(Q, K, coords, p, false);
}

double score_lemma1(const std::vector<double>& q, const std::vector<double>& k, const Vec3& r_ij,
                    const StringParams& p) {
  int d = p.dim();
  if (static_cast<int>(q.size()) != d || static_cast<int>(k.size()) != d)
    core::fail("score_lemma1", "q/k dims must equal params dim");
  Tensor64 P = cayley_orthogonal(p);
  std::vector<double> ql = mat_vec_t(P, q), kl = mat_vec_t(P, k);
  double s = 0;
  for (int b = 0; b < d / 2; ++b) {
    double qx = ql[2 * b], qy = ql[2 * b + 1];
    double kx = kl[2 * b], ky = kl[2 * b + 1];
    double qn = std::hypot(qx, qy), kn = std::hypot(kx, ky);
    if (qn == 0.0 || kn == 0.0) continue;  // degenerate block: angle undefined, product is 0
    // the per-block rotation acts with an orientation, so the angle between
    // blocks enters signed: alpha = atan2(cross, dot) rather than the
    // unsigned arccos form (both agree when the key block sits
    // counterclockwise of the query block)
    double alpha = std::atan2(qx * ky - qy * kx, qx * kx + qy * ky);
    double delta =
        p.freq.at(b, 0) * r_ij[0] + p.freq.at(b, 1) * r_ij[1] + p.freq.at(b, 2) * r_ij[2];
    s += qn * kn * std::cos(alpha + delta);
  }
  return s;
}

double block_angle_max(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.empty() || x.size() % 2 != 0)
    core::fail("block_angle_max", "inputs must be equal-length even-dim vectors");
  double worst = 0;
  for (size_t b = 0; b < x.size() / 2; ++b) {
    double xn = std::hypot(x[2 * b], x[2 * b + 1]);
    double yn = std::hypot(y[2 * b], y[2 * b + 1]);
    if (xn == 0.0 || yn == 0.0) core::fail("block_angle_max", "zero-norm block has no angle");
    double c = (x[2 * b] * y[2 * b] + x[2 * b + 1] * y[2 * b + 1]) / (xn * yn);
    c = std::min(1.0, std::max(-1.0, c));
    worst = std::max(worst, std::acos(c));
  }
  return worst;
}

}  // namespace clamp::stringpe
