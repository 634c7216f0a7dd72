// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "clamp/core/tensor.hpp"
#include "clamp/geom/pose.hpp"

namespace clamp::stringpe {

using core::Tensor64;
using geom::Vec3;

// Rotation-augmented relative position encoding over 3D coordinates.
// P = (I - S)(I + S)^{-1} from the skew S = G - G^T of an unconstrained
// generator G; per-2-block rotation angles are linear in the coordinate:
// delta_k(v) = freq[k,:] . v.
struct StringParams {
  Tensor64 skew_gen;  // d_QK x d_QK unconstrained generator
  Tensor64 freq;      // (d_QK/2) x 3, radians per meter

  int dim() const { return skew_gen.rank() == 2 ? skew_gen.shape[0] : 0; }

  // Log-spaced frequency magnitudes 10^(-4k/l) on axis (k mod 3); zero or
  // seeded small-random generator for S.
  static StringParams init(int d_qk, uint64_t seed = 0, double gen_scale = 0.0);
};

Tensor64 skew_from_generator(const Tensor64& gen);
Tensor64 cayley_from_skew(const Tensor64& S);
Tensor64 cayley_orthogonal(const StringParams& p);

std::vector<double> rope_rotate(const std::vector<double>& v, const Vec3& coord,
                                const Tensor64& freq);
// P . rope(P^T v); the coordinate-encoded query/key
std::vector<double> apply_string(const std::vector<double>& v, const Vec3& coord,
                                 const StringParams& p);

// s[i][j] = <encode(Q_i, r_i), encode(K_j, r_j)>. coords is n x 3. With all
// frequencies exactly zero the rotations are identities and P cancels, so the
// computation short-circuits to plain Q K^T (bit-exact reduction).
Tensor64 attention_scores(const Tensor64& Q, const Tensor64& K, const Tensor64& coords,
                          const StringParams& p);
Tensor64 attention_scores_serial(const Tensor64& Q, const Tensor64& K, const Tensor64& coords,
                                 const StringParams& p);

// Per-block closed form of the same score: sum_k |qb||kb| cos(alpha_k + delta_k(r)),
// alpha_k the signed angle from the query block to the key block in the
// P^T basis. Zero-norm blocks contribute exactly 0.
double score_lemma1(const std::vector<double>& q, const std::vector<double>& k, const Vec3& r_ij,
                    const StringParams& p);

// max over 2-blocks of the (unsigned) angle between x and y blocks
double block_angle_max(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace clamp::stringpe
