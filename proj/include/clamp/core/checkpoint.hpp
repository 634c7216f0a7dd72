// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <cstring>
#include <string>

#include "clamp/core/param_store.hpp"

namespace clamp::core {

// Checkpoint layout (little-endian):
//   u32 magic "CLMP", u32 version, u8 precision (4|8)
//   then per parameter, sorted by name:
//     u32 name_len, name bytes, u32 rank, u64 dims[rank], raw scalars
inline constexpr uint32_t kCkptMagic = 0x504d4c43u;  // "CLMP"
inline constexpr uint32_t kCkptVersion = 1;

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

inline void wr(std::FILE* f, const void* p, size_t n) {
  if (std::fwrite(p, 1, n, f) != n) fail("checkpoint", "short write");
}
inline void rd(std::FILE* f, void* p, size_t n) {
  if (std::fread(p, 1, n, f) != n) fail("checkpoint", "unexpected end of file");
}

}  // namespace detail

template <class Real>
inline void save_checkpoint(const ParamStoreT<Real>& store, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) fail("checkpoint", "cannot open '" + path + "' for writing");
  std::unique_ptr<std::FILE, detail::FileCloser> guard(f);
  detail::wr(f, &kCkptMagic, 4);
  detail::wr(f, &kCkptVersion, 4);
  uint8_t prec = static_cast<uint8_t>(sizeof(Real));
  detail::wr(f, &prec, 1);
  for (const auto& [name, e] : store.entries()) {  // std::map: already name-sorted
    uint32_t nl = static_cast<uint32_t>(name.size());
    detail::wr(f, &nl, 4);
    detail::wr(f, name.data(), nl);
    uint32_t rank = static_cast<uint32_t>(e.value.shape.size());
    detail::wr(f, &rank, 4);
    for (int d : e.value.shape) {
      uint64_t dd = static_cast<uint64_t>(d);
      detail::wr(f, &dd, 8);
    }
    detail::wr(f, e.value.data.data(), e.value.data.size() * sizeof(Real));
  }
}

// Loads into a fresh store (trainable flags default to true; freezing is a
// run-mode property, not part of the weights).
template <class Real>
inline ParamStoreT<Real> load_checkpoint(const std::string& path, uint64_t seed = 0) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) fail("checkpoint", "cannot open '" + path + "'");
  std::unique_ptr<std::FILE, detail::FileCloser> guard(f);
  uint32_t magic = 0, version = 0;
  uint8_t prec = 0;
  detail::rd(f, &magic, 4);
  if (magic != kCkptMagic) fail("checkpoint", "bad magic in '" + path + "'");
  detail::rd(f, &version, 4);
  if (version != kCkptVersion)
    fail("checkpoint", "unsupported version " + std::to_string(version));
  detail::rd(f, &prec, 1);
  if (prec != 4 && prec != 8) fail("checkpoint", "bad precision byte");
  ParamStoreT<Real> store(seed);
  for (;;) {
    uint32_t nl = 0;
    size_t got = std::fread(&nl, 1, 4, f);
    if (got == 0) break;  // clean EOF
    if (got != 4) fail("checkpoint", "truncated entry header");
    std::string name(nl, '\0');
    detail::rd(f, name.data(), nl);
    uint32_t rank = 0;
    detail::rd(f, &rank, 4);
    if (rank > 8) fail("checkpoint", "implausible rank " + std::to_string(rank));
    std::vector<int> shape(rank);
    for (uint32_t i = 0; i < rank; ++i) {
      uint64_t d = 0;
      detail::rd(f, &d, 8);
      shape[i] = static_cast<int>(d);
    }
    TensorT<Real> t(shape);
    if (prec == sizeof(Real)) {
      detail::rd(f, t.data.data(), t.data.size() * sizeof(Real));
    } else if (prec == 4) {
      std::vector<float> tmp(t.data.size());
      detail::rd(f, tmp.data(), tmp.size() * 4);
      for (size_t i = 0; i < tmp.size(); ++i) t.data[i] = static_cast<Real>(tmp[i]);
    } else {
      std::vector<double> tmp(t.data.size());
      detail::rd(f, tmp.data(), tmp.size() * 8);
      for (size_t i = 0; i < tmp.size(); ++i) t.data[i] = static_cast<Real>(tmp[i]);
    }
    store.add_value(name, std::move(t));
  }
  return store;
}

// Overwrite values of an existing store; names and shapes must match exactly.
template <class Real>
inline void load_checkpoint_into(ParamStoreT<Real>& store, const std::string& path) {
  ParamStoreT<Real> loaded = load_checkpoint<Real>(path, store.seed());
  if (loaded.size() != store.size())
    fail("checkpoint", "parameter count mismatch: file has " + std::to_string(loaded.size()) +
                           ", store has " + std::to_string(store.size()));
  for (auto& [name, e] : store.entries()) {
    if (!loaded.contains(name)) fail("checkpoint", "missing parameter '" + name + "' in file");
    TensorT<Real>& lv = loaded.get(name);
    if (lv.shape != e.value.shape)
      fail("checkpoint", "shape mismatch for '" + name + "': " + shape_str(lv.shape) + " vs " +
                             shape_str(e.value.shape));
    e.value = std::move(lv);
  }
}

}  // namespace clamp::core
