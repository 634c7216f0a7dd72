// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "clamp/stringpe/string_encoding.hpp"

namespace clamp::stringpe {

// Probe setup for the distance-decay property: queries/keys live in a ball of
// radius ball_r with per-dimension magnitudes at least dim_lb; the encoded
// score is swept along a probe direction with per-block angle delta = eta / T
// for eta in [2*T*phi, T*(pi - phi)].
struct Lemma2ProbeConfig {
  int d_qk = 8;
  double T = 1.0;
  double phi = 0.3;        // in [0, pi/3]
  double ball_r = 1.0;     // R
  double dim_lb = 0.05;    // r: lower bound on |dimension|
  int eta_points = 40;     // grid resolution over the admissible interval

  void validate() const;
};

struct Lemma2Report {
  std::vector<double> etas;
  std::vector<double> scores;
  bool strictly_decreasing = false;
  double epsilon = 0;          // cosine-similarity slack chosen from the Lipschitz bound
  double lipschitz = 0;        // numeric estimate of L(r)
  double cos_qk = 0;           // achieved cosine similarity
  double max_block_angle = 0;  // achieved max per-block angle (<= phi by construction)
};

// Estimate the Lipschitz constant of f(x, y) = max_k angle(x-block_k, y-block_k)
// over the probe region by seeded finite differences.
double estimate_block_angle_lipschitz(int d_qk, double ball_r, double dim_lb, uint64_t seed,
                                      int samples = 2000);

Lemma2Report lemma2_probe(const Lemma2ProbeConfig& cfg, uint64_t seed);

}  // namespace clamp::stringpe
