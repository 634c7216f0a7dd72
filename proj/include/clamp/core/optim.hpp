// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <string>

#include "clamp/core/param_store.hpp"

namespace clamp::core {

// Adam with bias correction. Frozen parameters are skipped entirely, so a
// zero gradient tensor for them never perturbs moments or weights.
template <class Real>
class AdamT {
 public:
  explicit AdamT(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(ParamStoreT<Real>& store, const std::map<std::string, TensorT<Real>>& grads,
            double lr) {
    ++t_;
    double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (auto& [name, e] : store.entries()) {
      if (!e.trainable) continue;
      auto git = grads.find(name);
      if (git == grads.end()) continue;
      const TensorT<Real>& g = git->second;
      if (!g.same_shape(e.value))
        fail("adam", "gradient shape mismatch for '" + name + "'");
      TensorT<Real>& m = slot(m_, name, e.value);
      TensorT<Real>& v = slot(v_, name, e.value);
      for (int64_t i = 0; i < e.value.numel(); ++i) {
        double gi = static_cast<double>(g[i]);
        double mi = b1_ * static_cast<double>(m[i]) + (1.0 - b1_) * gi;
        double vi = b2_ * static_cast<double>(v[i]) + (1.0 - b2_) * gi * gi;
        m[i] = Real(mi);
        v[i] = Real(vi);
        e.value[i] -= Real(lr * (mi / c1) / (std::sqrt(vi / c2) + eps_));
      }
    }
  }

  int64_t steps() const { return t_; }

 private:
  TensorT<Real>& slot(std::map<std::string, TensorT<Real>>& mp, const std::string& name,
                      const TensorT<Real>& like) {
    auto it = mp.find(name);
    if (it == mp.end()) it = mp.emplace(name, TensorT<Real>(like.shape)).first;
    return it->second;
  }

  double b1_, b2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, TensorT<Real>> m_, v_;
};

using Adam64 = AdamT<double>;

// ramp linearly from 0 to peak over `warmup` steps, then hold flat
inline double linear_warmup_lr(int64_t step, int64_t warmup, double peak) {
  if (warmup <= 0) return peak;
  if (step >= warmup) return peak;
  return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
}

// linear warmup for warmup_frac of the run, then cosine decay to zero
inline double cosine_warmup_lr(int64_t step, int64_t total, double warmup_frac, double peak) {
  if (total <= 0) return peak;
  int64_t warmup = static_cast<int64_t>(warmup_frac * static_cast<double>(total));
  if (warmup > 0 && step < warmup)
    return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
  double denom = static_cast<double>(total > warmup ? total - warmup : 1);
  double progress = static_cast<double>(step - warmup) / denom;
  if (progress > 1.0) progress = 1.0;
  return peak * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

}  // namespace clamp::core
