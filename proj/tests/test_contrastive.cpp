// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "clamp/contrastive/siglip.hpp"
#include "clamp/core/grad_check.hpp"
#include "clamp/core/rng.hpp"

using namespace clamp;
using namespace clamp::contrastive;
using core::CounterRng;
using core::Graph64;
using core::ParamStore64;
using core::Tensor64;

namespace {

double softplus_ref(double x) { return std::log1p(std::exp(x)); }

Tensor64 unit_rows(int B, int d, uint64_t seed) {
  Tensor64 X({B, d});
  CounterRng r(seed);
  for (int i = 0; i < B; ++i) {
    double n = 0;
    for (int j = 0; j < d; ++j) {
      X.at(i, j) = r.normal("x", i * d + j);
      n += X.at(i, j) * X.at(i, j);
    }
    n = std::sqrt(n);
    for (int j = 0; j < d; ++j) X.at(i, j) /= n;
  }
  return X;
}

}  // namespace

TEST_CASE("pairwise_logits: trivial and oracle forms") {
  // orthonormal matched rows, t=1, b=0 -> identity matrix
  Tensor64 X({2, 3}, {1, 0, 0, 0, 1, 0});
  TempBias tb;
  tb.log_t = 0.0;
  tb.b = 0.0;
  Tensor64 z = pairwise_logits(X, X, tb);
  CHECK(z.at(0, 0) == doctest::Approx(1.0));
  CHECK(z.at(1, 1) == doctest::Approx(1.0));
  CHECK(z.at(0, 1) == doctest::Approx(0.0));
  CHECK(z.at(1, 0) == doctest::Approx(0.0));

  // b shifts every entry by the same constant
  TempBias tb2 = tb;
  tb2.b = 0.7;
  Tensor64 z2 = pairwise_logits(X, X, tb2);
  for (int64_t i = 0; i < z.numel(); ++i) CHECK(z2[i] == doctest::Approx(z[i] + 0.7).epsilon(1e-12));

  // random 3x3 vs entrywise dot oracle, including temperature
  Tensor64 A = unit_rows(3, 5, 1), B = unit_rows(3, 5, 2);
  TempBias tb3;
  tb3.log_t = std::log(4.0);
  tb3.b = -1.5;
  Tensor64 z3 = pairwise_logits(A, B, tb3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dot = 0;
      for (int c = 0; c < 5; ++c) dot += A.at(i, c) * B.at(j, c);
      CHECK(z3.at(i, j) == doctest::Approx(4.0 * dot - 1.5).epsilon(1e-12));
    }

  // literal printed sign flips the bias contribution
  Tensor64 z4 = pairwise_logits(A, B, tb3, true);
  for (int64_t i = 0; i < z4.numel(); ++i)
    CHECK(z4[i] == doctest::Approx(z3[i] + 3.0).epsilon(1e-10));

  Tensor64 bad({2, 4});
  CHECK_THROWS_AS(pairwise_logits(X, bad, tb), std::runtime_error);
}

TEST_CASE("siglip_pair_loss: printed fixtures and brute force") {
  // |B|=1, t=1, b=0, orthogonal pair -> log 2
  Tensor64 x({1, 2}, {1, 0}), y({1, 2}, {0, 1});
  TempBias flat;
  flat.log_t = 0.0;
  flat.b = 0.0;
  CHECK(siglip_pair_loss(x, y, flat) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // |B|=1, perfectly aligned unit pair at the published init -> log 2
  TempBias init;  // t=10, b=-10
  Tensor64 u({1, 3}, {0.6, 0.8, 0.0});
  CHECK(siglip_pair_loss(u, u, init) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // |B|=2 brute force over the four (i,j) terms
  Tensor64 A = unit_rows(2, 6, 3), B = unit_rows(2, 6, 4);
  TempBias tb;
  tb.log_t = std::log(3.0);
  tb.b = -0.4;
  double want = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      double dot = 0;
      for (int c = 0; c < 6; ++c) dot += A.at(i, c) * B.at(j, c);
      double z = 3.0 * dot - 0.4, l = i == j ? 1.0 : -1.0;
      want += softplus_ref(-l * z);
    }
  want /= 2.0;
  CHECK(siglip_pair_loss(A, B, tb) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("tri_modal_loss: collapse, brute force, permutation symmetry") {
  Tensor64 X = unit_rows(3, 8, 5);
  TempBias tb;
  CHECK(tri_modal_loss(X, X, X, tb) == doctest::Approx(siglip_pair_loss(X, X, tb)).epsilon(1e-12));

  Tensor64 A = unit_rows(2, 8, 6), B = unit_rows(2, 8, 7), C = unit_rows(2, 8, 8);
  double want =
      (siglip_pair_loss(A, B, tb) + siglip_pair_loss(A, C, tb) + siglip_pair_loss(B, C, tb)) / 3.0;
  CHECK(tri_modal_loss(A, B, C, tb) == doctest::Approx(want).epsilon(1e-12));

  // simultaneous row permutation of all three matrices
  Tensor64 A3 = unit_rows(4, 8, 9), B3 = unit_rows(4, 8, 10), C3 = unit_rows(4, 8, 11);
  int perm[4] = {2, 0, 3, 1};
  Tensor64 Ap({4, 8}), Bp({4, 8}), Cp({4, 8});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 8; ++j) {
      Ap.at(i, j) = A3.at(perm[i], j);
      Bp.at(i, j) = B3.at(perm[i], j);
      Cp.at(i, j) = C3.at(perm[i], j);
    }
  CHECK(tri_modal_loss(Ap, Bp, Cp, tb) ==
        doctest::Approx(tri_modal_loss(A3, B3, C3, tb)).epsilon(1e-12));
}

TEST_CASE("matching_probabilities: range, midpoint, ranking consistency") {
  Tensor64 x({1, 2}, {1, 0}), y({1, 2}, {0, 1});
  TempBias flat;
  flat.log_t = 0.0;
  flat.b = 0.0;
  CHECK(matching_probabilities(x, y, flat)[0] == doctest::Approx(0.5).epsilon(1e-12));

  Tensor64 A = unit_rows(5, 8, 12), B = unit_rows(5, 8, 13);
  TempBias tb;
  Tensor64 P = matching_probabilities(A, B, tb);
  Tensor64 Z = pairwise_logits(A, B, tb);
  for (int64_t i = 0; i < P.numel(); ++i) {
    CHECK(P[i] > 0.0);
    CHECK(P[i] < 1.0);
  }
  // sigmoid is monotone, so per-row argmax matches the logit/dot argmax that
  // retrieval ranks by
  for (int i = 0; i < 5; ++i) {
    int am_p = 0, am_z = 0;
    for (int j = 1; j < 5; ++j) {
      if (P.at(i, j) > P.at(i, am_p)) am_p = j;
      if (Z.at(i, j) > Z.at(i, am_z)) am_z = j;
    }
    CHECK(am_p == am_z);
  }
}

TEST_CASE("monotonicity in individual dot products") {
  // with Y = canonical basis rows, dot(i,j) is exactly X[i][j]; bumping one
  // entry isolates one pairwise dot
  int B = 3, d = 5;
  Tensor64 Y({B, d});
  for (int i = 0; i < B; ++i) Y.at(i, i) = 1.0;
  Tensor64 X({B, d});
  CounterRng r(14);
  for (int64_t i = 0; i < X.numel(); ++i) X[i] = 0.3 * r.normal("x", i);
  TempBias tb;
  double base = siglip_pair_loss(X, Y, tb);
  double eps = 1e-4;
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < B; ++j) {
      Tensor64 Xb = X;
      Xb.at(i, j) += eps;
      double moved = siglip_pair_loss(Xb, Y, tb);
      if (i == j)
        CHECK(moved < base);
      else
        CHECK(moved > base);
    }
}

TEST_CASE("separation: matched batch scores below mismatched batch") {
  int B = 4, d = 8;
  Tensor64 X({B, d});
  for (int i = 0; i < B; ++i) X.at(i, i) = 1.0;
  Tensor64 Yrot({B, d});
  for (int i = 0; i < B; ++i) Yrot.at(i, (i + 1) % B) = 1.0;
  TempBias tb;  // published init
  double matched = tri_modal_loss(X, X, X, tb);
  double mismatched = tri_modal_loss(X, Yrot, X, tb);
  CHECK(matched < mismatched);

  // random-embedding starting loss sits near softplus(10): matched pairs are
  // uncorrelated, so diagonal terms dominate at the published init
  Tensor64 A = unit_rows(16, 64, 15), Bm = unit_rows(16, 64, 16), C = unit_rows(16, 64, 17);
  double loss0 = tri_modal_loss(A, Bm, C, tb);
  CHECK(std::fabs(loss0 - softplus_ref(10.0)) < 0.5);
}

TEST_CASE("graph path matches plain evaluation and passes grad_check") {
  int B = 3, d = 6;
  ParamStore64 ps(18);
  ps.add("X", {B, d}, core::Init::kNormal, 0.5);
  ps.add("Y", {B, d}, core::Init::kNormal, 0.5);
  ps.add("Z", {B, d}, core::Init::kNormal, 0.5);
  add_temp_bias_params(ps, "tb");
  CHECK(read_temp_bias(ps, "tb").t() == doctest::Approx(10.0).epsilon(1e-12));

  for (bool literal : {false, true}) {
    Graph64 g(&ps);
    core::Id loss =
        tri_modal_loss_graph(g, g.param("X"), g.param("Y"), g.param("Z"), "tb", literal);
    double plain = tri_modal_loss(ps.get("X"), ps.get("Y"), ps.get("Z"),
                                  read_temp_bias(ps, "tb"), literal);
    CHECK(g.scalar_value(loss) == doctest::Approx(plain).epsilon(1e-12));
  }

  auto rep = core::grad_check(
      ps,
      [&](Graph64& g) {
        return tri_modal_loss_graph(g, g.param("X"), g.param("Y"), g.param("Z"), "tb");
      },
      1e-5, 64, 19);
  INFO("max_rel_err=", rep.max_rel_err);
  CHECK(rep.max_rel_err < 1e-4);
}
