// SPDX-License-Identifier: Apache-2.0
#include "clamp/policy/schedule.hpp"

#include <cmath>

namespace clamp::policy {

using core::Tensor64;

namespace {
constexpr double kBetaMin = 1e-4;
constexpr double kBetaMax = 0.02;
}  // namespace

void NoiseSchedule::check_index(int k) const {
  if (k < 0 || k >= K)
    core::fail("schedule", "index " + std::to_string(k) + " outside [0," + std::to_string(K) + ")");
}

void NoiseSchedule::check_step(int k) const {
  if (k < 1 || k > K)
    core::fail("schedule", "step " + std::to_string(k) + " outside [1," + std::to_string(K) + "]");
}

double NoiseSchedule::alpha_step(int k) const {
  check_step(k);
  return 1.0 / std::sqrt(alpha[static_cast<size_t>(k - 1)]);
}

double NoiseSchedule::gamma_step(int k) const {
  check_step(k);
  return beta[static_cast<size_t>(k - 1)] / std::sqrt(1.0 - alpha_bar[static_cast<size_t>(k - 1)]);
}

double NoiseSchedule::sigma_step(int k) const {
  check_step(k);
  if (k == 1) return 0.0;
  size_t i = static_cast<size_t>(k - 1);
  double var = (1.0 - alpha_bar[i - 1]) / (1.0 - alpha_bar[i]) * beta[i];
  return std::sqrt(var);
}

NoiseSchedule make_schedule(int K, const std::string& kind) {
  if (K < 1) core::fail("schedule", "K must be >= 1, got " + std::to_string(K));
  if (kind != "linear") core::fail("schedule", "unknown schedule kind '" + kind + "'");
  NoiseSchedule s;
  s.K = K;
  s.beta.resize(static_cast<size_t>(K));
  s.alpha.resize(static_cast<size_t>(K));
  s.alpha_bar.resize(static_cast<size_t>(K));
  double step = K > 1 ? (kBetaMax - kBetaMin) / static_cast<double>(K - 1) : 0.0;
  double prod = 1.0;
  for (int k = 0; k < K; ++k) {
    double b = kBetaMin + step * static_cast<double>(k);
    s.beta[static_cast<size_t>(k)] = b;
    s.alpha[static_cast<size_t>(k)] = 1.0 - b;
    prod *= 1.0 - b;
    s.alpha_bar[static_cast<size_t>(k)] = prod;
    if (!(prod > 0.0 && prod <= 1.0)) core::fail("schedule", "alpha_bar left (0,1]");
    if (k > 0 && !(prod < s.alpha_bar[static_cast<size_t>(k - 1)]))
      core::fail("schedule", "alpha_bar not strictly decreasing");
  }
  return s;
}

Tensor64 add_noise(const Tensor64& a0, int k, const Tensor64& eps, const NoiseSchedule& sched) {
  sched.check_index(k);
  if (!a0.same_shape(eps))
    core::fail("add_noise", "shape mismatch " + core::shape_str(a0.shape) + " vs " +
                                core::shape_str(eps.shape));
  double ab = sched.alpha_bar[static_cast<size_t>(k)];
  double ca = std::sqrt(ab), ce = std::sqrt(1.0 - ab);
  Tensor64 out(a0.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = ca * a0[i] + ce * eps[i];
  return out;
}

Tensor64 invert_noise(const Tensor64& noised, int k, const Tensor64& eps,
                      const NoiseSchedule& sched) {
  sched.check_index(k);
  if (!noised.same_shape(eps))
    core::fail("invert_noise", "shape mismatch " + core::shape_str(noised.shape) + " vs " +
                                   core::shape_str(eps.shape));
  double ab = sched.alpha_bar[static_cast<size_t>(k)];
  double ca = std::sqrt(ab), ce = std::sqrt(1.0 - ab);
  Tensor64 out(noised.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = (noised[i] - ce * eps[i]) / ca;
  return out;
}

Tensor64 denoise_from_estimate(const Tensor64& a_k, const Tensor64& eps_hat, int k,
                               const NoiseSchedule& sched, const Tensor64& noise_draw,
                               bool textbook) {
  sched.check_step(k);
  if (!a_k.same_shape(eps_hat) || !a_k.same_shape(noise_draw))
    core::fail("denoise", "shape mismatch between chunk, estimate, and noise draw");
  double a = sched.alpha_step(k), gmm = sched.gamma_step(k), sg = sched.sigma_step(k);
  Tensor64 out(a_k.shape);
  if (textbook) {
    for (int64_t i = 0; i < out.numel(); ++i)
      out[i] = a * (a_k[i] - gmm * eps_hat[i]) + sg * noise_draw[i];
  } else {
    for (int64_t i = 0; i < out.numel(); ++i)
      out[i] = a * (a_k[i] - gmm * eps_hat[i] + sg * noise_draw[i]);
  }
  return out;
}

}  // namespace clamp::policy
