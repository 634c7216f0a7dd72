// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "clamp/core/tensor.hpp"

namespace clamp::policy {

// DDPM noise schedule. beta follows the common linspace convention
// (1e-4 .. 0.02 spread across K steps; K=1 keeps the left endpoint).
// Arrays are indexed 0..K-1; the sampler's step argument k is 1-based.
struct NoiseSchedule {
  int K = 0;
  std::vector<double> beta;       // per-step variance
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // cumulative product of alpha

  // reverse-step coefficients for step k in [1, K]
  double alpha_step(int k) const;  // 1/sqrt(alpha_{k-1})
  double gamma_step(int k) const;  // beta_{k-1}/sqrt(1 - alpha_bar_{k-1})
  double sigma_step(int k) const;  // posterior stddev; exactly 0 at k == 1

  void check_index(int k) const;  // 0-based, [0, K)
  void check_step(int k) const;   // 1-based, [1, K]
};

NoiseSchedule make_schedule(int K, const std::string& kind = "linear");

// forward process: sqrt(alpha_bar_k) * a0 + sqrt(1 - alpha_bar_k) * eps,
// with 0-based k
core::Tensor64 add_noise(const core::Tensor64& a0, int k, const core::Tensor64& eps,
                         const NoiseSchedule& sched);

// analytic inversion of add_noise when the injected noise is known
core::Tensor64 invert_noise(const core::Tensor64& noised, int k, const core::Tensor64& eps,
                            const NoiseSchedule& sched);

// One reverse step given a noise estimate, k in [1, K]. noise_draw is a
// standard-normal tensor scaled by sigma inside. The default follows the
// sampler equation as printed, with the additive noise inside the alpha
// scaling: a_{k-1} = alpha*(a_k - gamma*eps_hat + sigma*z). textbook=true
// instead adds the noise after scaling, matching the classic DDPM posterior.
core::Tensor64 denoise_from_estimate(const core::Tensor64& a_k, const core::Tensor64& eps_hat,
                                     int k, const NoiseSchedule& sched,
                                     const core::Tensor64& noise_draw, bool textbook = false);

}  // namespace clamp::policy
