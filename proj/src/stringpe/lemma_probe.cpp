// SPDX-License-Identifier: Apache-2.0
#include "clamp/stringpe/lemma_probe.hpp"

#include <cmath>

#include "clamp/core/rng.hpp"

namespace clamp::stringpe {

void Lemma2ProbeConfig::validate() const {
  if (d_qk <= 0 || d_qk % 2 != 0) core::fail("lemma2_probe", "d_qk must be positive and even");
  if (T <= 0) core::fail("lemma2_probe", "T must be positive");
  if (phi < 0 || phi > core::kPi / 3) core::fail("lemma2_probe", "phi must lie in [0, pi/3]");
  if (2 * T * phi >= T * (core::kPi - phi))
    core::fail("lemma2_probe", "empty eta interval");  // unreachable for phi <= pi/3, kept explicit
  if (ball_r <= 0 || dim_lb <= 0) core::fail("lemma2_probe", "radius and lower bound must be positive");
  if (dim_lb >= ball_r / std::sqrt(double(d_qk)))
    core::fail("lemma2_probe",
               "dim_lb too large: no vector with all |dims| >= dim_lb fits in the ball");
  if (eta_points < 2) core::fail("lemma2_probe", "need at least two eta grid points");
}

namespace {

// draw x with all |x_i| in [dim_lb, ball_r/sqrt(d)] so that ||x|| <= ball_r
std::vector<double> draw_region(core::RngStream& rs, int d, double ball_r, double dim_lb) {
  double hi = ball_r / std::sqrt(double(d));
  std::vector<double> x(static_cast<size_t>(d));
  for (int i = 0; i < d; ++i) {
    double mag = dim_lb + (hi - dim_lb) * rs.uniform();
    x[static_cast<size_t>(i)] = (rs.uniform() < 0.5 ? -1.0 : 1.0) * mag;
  }
  return x;
}

double f_max_angle(const std::vector<double>& x, const std::vector<double>& y) {
  return block_angle_max(x, y);
}

}  // namespace

double estimate_block_angle_lipschitz(int d_qk, double ball_r, double dim_lb, uint64_t seed,
                                      int samples) {
  core::RngStream rs(seed, "lemma2/lipschitz");
  double worst = 0;
  const double h = 1e-4;
  for (int s = 0; s < samples; ++s) {
    auto x = draw_region(rs, d_qk, ball_r, dim_lb);
    auto y = draw_region(rs, d_qk, ball_r, dim_lb);
    double f0 = f_max_angle(x, y);
    // directional difference quotient along a random joint direction
    std::vector<double> dx(x.size()), dy(y.size());
    double nrm = 0;
    for (size_t i = 0; i < x.size(); ++i) {
      dx[i] = rs.normal();
      dy[i] = rs.normal();
      nrm += dx[i] * dx[i] + dy[i] * dy[i];
    }
    nrm = std::sqrt(nrm);
    if (nrm == 0) continue;
    auto x2 = x;
    auto y2 = y;
    for (size_t i = 0; i < x.size(); ++i) {
      x2[i] += h * dx[i] / nrm;
      y2[i] += h * dy[i] / nrm;
    }
    double f1 = f_max_angle(x2, y2);
    worst = std::max(worst, std::fabs(f1 - f0) / h);
  }
  return 1.5 * worst;  // safety margin over the sampled estimate
}

Lemma2Report lemma2_probe(const Lemma2ProbeConfig& cfg, uint64_t seed) {
  cfg.validate();
  Lemma2Report rep;

  rep.lipschitz = estimate_block_angle_lipschitz(cfg.d_qk, cfg.ball_r, cfg.dim_lb, seed);
  // choose epsilon so that L * 2R sin(arccos(1-eps)/2) <= phi; then any key
  // within cosine 1-eps of the query has every block angle <= phi
  double arg = std::min(1.0, cfg.phi / (2.0 * cfg.ball_r * std::max(rep.lipschitz, 1e-12)));
  rep.epsilon = 1.0 - std::cos(2.0 * std::asin(arg));

  core::RngStream rs(seed, "lemma2/qk");
  std::vector<double> q = draw_region(rs, cfg.d_qk, cfg.ball_r, cfg.dim_lb);

  // key = query rotated toward a perturbation, shrunk until both the cosine
  // bound and the per-block angle bound hold
  std::vector<double> k = q;
  double scale = 1.0;
  for (int attempt = 0; attempt < 60; ++attempt) {
    std::vector<double> cand = q;
    core::RngStream pr(seed + attempt, "lemma2/perturb");
    for (auto& v : cand) v += scale * 0.05 * pr.normal();
    double dot = 0, qn = 0, cn = 0;
    for (size_t i = 0; i < q.size(); ++i) {
      dot += q[i] * cand[i];
      qn += q[i] * q[i];
      cn += cand[i] * cand[i];
    }
    double cosqk = dot / std::sqrt(qn * cn);
    bool blocks_ok = true;
    for (size_t b = 0; b < cand.size() / 2 && blocks_ok; ++b)
      blocks_ok = std::hypot(cand[2 * b], cand[2 * b + 1]) > 0;
    if (blocks_ok && cosqk >= 1.0 - rep.epsilon && f_max_angle(q, cand) <= cfg.phi) {
      k = cand;
      break;
    }
    scale *= 0.5;
    if (attempt == 59) k = q;  // fall back to the exact query (angle 0)
  }
  {
    double dot = 0, qn = 0, kn = 0;
    for (size_t i = 0; i < q.size(); ++i) {
      dot += q[i] * k[i];
      qn += q[i] * q[i];
      kn += k[i] * k[i];
    }
    rep.cos_qk = dot / std::sqrt(qn * kn);
  }
  rep.max_block_angle = f_max_angle(q, k);

  // probe direction u: delta_k(eta * u) = eta / T for every block
  Vec3 u{1, 0, 0};
  StringParams params;
  params.skew_gen = Tensor64({cfg.d_qk, cfg.d_qk});  // S = 0, canonical basis as in the proof
  params.freq = Tensor64({cfg.d_qk / 2, 3});
  for (int b = 0; b < cfg.d_qk / 2; ++b) {
    params.freq.at(b, 0) = u[0] / cfg.T;
    params.freq.at(b, 1) = u[1] / cfg.T;
    params.freq.at(b, 2) = u[2] / cfg.T;
  }

  double lo = 2.0 * cfg.T * cfg.phi, hi = cfg.T * (core::kPi - cfg.phi);
  rep.etas.resize(static_cast<size_t>(cfg.eta_points));
  rep.scores.resize(static_cast<size_t>(cfg.eta_points));
  for (int i = 0; i < cfg.eta_points; ++i) {
    double eta = lo + (hi - lo) * double(i) / double(cfg.eta_points - 1);
    rep.etas[static_cast<size_t>(i)] = eta;
    Vec3 r{eta * u[0], eta * u[1], eta * u[2]};
    rep.scores[static_cast<size_t>(i)] = score_lemma1(q, k, r, params);
  }
  rep.strictly_decreasing = true;
  for (size_t i = 1; i < rep.scores.size(); ++i)
    rep.strictly_decreasing = rep.strictly_decreasing && rep.scores[i] < rep.scores[i - 1];
  return rep;
}

}  // namespace clamp::stringpe
