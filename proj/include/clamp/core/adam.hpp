// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <string>

#include "clamp/core/param_store.hpp"
#include "clamp/core/rng.hpp"

namespace clamp::core {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with per-parameter moment state; moments are kept in double regardless
// of the training precision. Frozen parameters are skipped entirely.
template <class Real>
class AdamT {
 public:
  explicit AdamT(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(ParamStoreT<Real>& store, const std::map<std::string, TensorT<Real>>& grads,
            double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (auto& [name, e] : store.entries()) {
      if (!e.trainable) continue;
      auto git = grads.find(name);
      if (git == grads.end()) continue;
      const TensorT<Real>& g = git->second;
      if (g.shape != e.value.shape)
        fail("adam", "gradient shape mismatch for '" + name + "'");
      auto& st = state_[name];
      if (st.m.empty()) {
        st.m.assign(g.data.size(), 0.0);
        st.v.assign(g.data.size(), 0.0);
      }
      for (size_t i = 0; i < g.data.size(); ++i) {
        double gd = double(g.data[i]);
        st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * gd;
        st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * gd * gd;
        double mh = st.m[i] / bc1;
        double vh = st.v[i] / bc2;
        e.value.data[i] =
            static_cast<Real>(double(e.value.data[i]) - lr * mh / (std::sqrt(vh) + cfg_.eps));
      }
    }
  }

  int64_t steps_taken() const { return t_; }

 private:
  struct State {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  std::map<std::string, State> state_;
  int64_t t_ = 0;
};

// Cosine decay to zero with a linear warmup fraction at the start.
inline double cosine_warmup_lr(int64_t step, int64_t total_steps, double base_lr,
                               double warmup_frac = 0.05) {
  if (total_steps <= 0) return base_lr;
  auto warm = static_cast<int64_t>(warmup_frac * double(total_steps));
  if (warm > 0 && step < warm) return base_lr * double(step + 1) / double(warm);
  double p = double(step - warm) / double(std::max<int64_t>(1, total_steps - warm));
  if (p > 1.0) p = 1.0;
  return base_lr * 0.5 * (1.0 + std::cos(kPi * p));
}

// Linear ramp 0 -> peak over warmup_steps, constant afterwards.
inline double linear_warmup_lr(int64_t step, int64_t warmup_steps, double peak_lr) {
  if (warmup_steps <= 0 || step >= warmup_steps) return peak_lr;
  return peak_lr * double(step + 1) / double(warmup_steps);
}

}  // namespace clamp::core
