// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "clamp/core/rng.hpp"
#include "clamp/core/tensor.hpp"

namespace clamp::core {

enum class Init { kZeros, kOnes, kConst, kNormal, kUniform, kXavier };

// Named parameter tensors with trainable/frozen flags. Initialization draws
// come from a counter stream keyed by the parameter name, so the full init is
// reproducible from rng_seed alone and independent of creation order.
template <class Real>
class ParamStoreT {
 public:
  struct Entry {
    TensorT<Real> value;
    bool trainable = true;
  };

  explicit ParamStoreT(uint64_t seed = 0) : rng_(seed) {}

  uint64_t seed() const { return rng_.seed(); }
  const CounterRng& rng() const { return rng_; }

  TensorT<Real>& add(const std::string& name, std::vector<int> shape, Init init = Init::kZeros,
                     double arg = 0.0) {
    if (entries_.count(name)) fail("param_store", "duplicate parameter '" + name + "'");
    Entry e;
    e.value = TensorT<Real>(std::move(shape));
    init_tensor(name, e.value, init, arg);
    auto [it, ok] = entries_.emplace(name, std::move(e));
    (void)ok;
    return it->second.value;
  }

  TensorT<Real>& add_value(const std::string& name, TensorT<Real> v) {
    if (entries_.count(name)) fail("param_store", "duplicate parameter '" + name + "'");
    auto [it, ok] = entries_.emplace(name, Entry{std::move(v), true});
    (void)ok;
    return it->second.value;
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  TensorT<Real>& get(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) fail("param_store", "unknown parameter '" + name + "'");
    return it->second.value;
  }
  const TensorT<Real>& get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) fail("param_store", "unknown parameter '" + name + "'");
    return it->second.value;
  }

  bool trainable(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) fail("param_store", "unknown parameter '" + name + "'");
    return it->second.trainable;
  }
  void set_trainable(const std::string& name, bool t) {
    auto it = entries_.find(name);
    if (it == entries_.end()) fail("param_store", "unknown parameter '" + name + "'");
    it->second.trainable = t;
  }
  // freeze/thaw every parameter whose name starts with prefix
  int set_trainable_prefix(const std::string& prefix, bool t) {
    int n = 0;
    for (auto& [k, e] : entries_)
      if (k.rfind(prefix, 0) == 0) {
        e.trainable = t;
        ++n;
      }
    return n;
  }

  // sorted by construction (std::map)
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (auto& [k, e] : entries_) out.push_back(k);
    return out;
  }
  size_t size() const { return entries_.size(); }
  int64_t total_scalars() const {
    int64_t n = 0;
    for (auto& [k, e] : entries_) n += e.value.numel();
    return n;
  }

  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

 private:
  void init_tensor(const std::string& name, TensorT<Real>& t, Init init, double arg) {
    const std::string stream = "init/" + name;
    switch (init) {
      case Init::kZeros:
        break;
      case Init::kOnes:
        for (auto& v : t.data) v = Real(1);
        break;
      case Init::kConst:
        for (auto& v : t.data) v = static_cast<Real>(arg);
        break;
      case Init::kNormal: {
        double std = arg == 0.0 ? 0.02 : arg;
        for (int64_t i = 0; i < t.numel(); ++i)
          t.data[i] = static_cast<Real>(std * rng_.normal(stream, static_cast<uint64_t>(i)));
        break;
      }
      case Init::kUniform: {
        double lim = arg == 0.0 ? 1.0 : arg;
        for (int64_t i = 0; i < t.numel(); ++i)
          t.data[i] = static_cast<Real>(
              lim * (2.0 * rng_.uniform(stream, static_cast<uint64_t>(i)) - 1.0));
        break;
      }
      case Init::kXavier: {
        int fan_in = t.rank() >= 1 ? t.shape[0] : 1;
        int fan_out = t.rank() >= 2 ? t.shape[1] : 1;
        double lim = std::sqrt(6.0 / (fan_in + fan_out));
        for (int64_t i = 0; i < t.numel(); ++i)
          t.data[i] = static_cast<Real>(
              lim * (2.0 * rng_.uniform(stream, static_cast<uint64_t>(i)) - 1.0));
        break;
      }
    }
  }

  CounterRng rng_;
  std::map<std::string, Entry> entries_;
};

using ParamStore64 = ParamStoreT<double>;
using ParamStore32 = ParamStoreT<float>;

}  // namespace clamp::core
