// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace clamp::core {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// splitmix64 finalizer
constexpr uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

constexpr uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// Counter-based generator: draw i of a named stream is a pure function of
// (seed, stream, i). No mutable state, so draws are order-independent and
// reproducible regardless of evaluation schedule.
class CounterRng {
 public:
  explicit CounterRng(uint64_t seed) : seed_(seed) {}

  uint64_t seed() const { return seed_; }

  uint64_t bits(uint64_t stream, uint64_t idx) const {
    return mix64(mix64(seed_ ^ mix64(stream)) + idx);
  }
  uint64_t bits(std::string_view stream, uint64_t idx) const {
    return bits(fnv1a64(stream), idx);
  }

  // [0,1)
  double uniform(uint64_t stream, uint64_t idx) const {
    return static_cast<double>(bits(stream, idx) >> 11) * 0x1.0p-53;
  }
  double uniform(std::string_view stream, uint64_t idx) const {
    return uniform(fnv1a64(stream), idx);
  }

  // Box-Muller; draw i consumes sub-draws 2i and 2i+1 so indices never collide.
  double normal(uint64_t stream, uint64_t idx) const {
    double u1 = static_cast<double>((bits(stream, 2 * idx) >> 11) + 1) * 0x1.0p-53;  // (0,1]
    double u2 = uniform(stream, 2 * idx + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }
  double normal(std::string_view stream, uint64_t idx) const {
    return normal(fnv1a64(stream), idx);
  }

 private:
  uint64_t seed_;
};

// Sequential cursor over one stream of a CounterRng.
class RngStream {
 public:
  RngStream(const CounterRng& rng, std::string_view name)
      : rng_(rng), stream_(fnv1a64(name)) {}
  RngStream(uint64_t seed, std::string_view name)
      : rng_(seed), stream_(fnv1a64(name)) {}

  uint64_t bits() { return rng_.bits(stream_, ctr_++); }
  double uniform() { return rng_.uniform(stream_, ctr_++); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return rng_.normal(stream_, ctr_++); }
  // inclusive bounds
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(bits() % static_cast<uint64_t>(hi - lo + 1));
  }

  // k distinct indices from [0,n), order-stable for a given cursor position
  std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k) {
    std::vector<int64_t> pool(n);
    for (int64_t i = 0; i < n; ++i) pool[i] = i;
    if (k > n) k = n;
    for (int64_t i = 0; i < k; ++i) {
      int64_t j = uniform_int(i, n - 1);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

 private:
  CounterRng rng_;
  uint64_t stream_;
  uint64_t ctr_ = 0;
};

}  // namespace clamp::core
