// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "clamp/core/graph.hpp"

namespace clamp::core {

struct GradCheckEntry {
  std::string name;
  double max_abs_err = 0;
  double max_rel_err = 0;
  int checked = 0;
};

struct GradReport {
  double max_abs_err = 0;
  double max_rel_err = 0;
  double loss = 0;
  std::vector<GradCheckEntry> per_param;
  bool pass(double rel_tol) const { return max_rel_err < rel_tol; }
};

// Central-difference check of analytic parameter gradients. `build` must be a
// pure function of the store: (GraphT<Real>&) -> loss Id. Parameters with more
// than `max_entries` scalars are subsampled with a seeded draw. Frozen
// parameters are skipped (their analytic gradient is exactly zero by
// construction, asserted separately in tests).
template <class Real, class Build>
GradReport grad_check(ParamStoreT<Real>& store, Build&& build, double step = 1e-5,
                      int max_entries = 64, uint64_t seed = 1234) {
  GradReport rep;

  auto eval = [&]() -> double {
    GraphT<Real> g(&store);
    auto root = build(g);
    return double(g.scalar_value(root));
  };

  GraphT<Real> g0(&store);
  auto root = build(g0);
  rep.loss = double(g0.scalar_value(root));
  g0.backward(root);
  auto grads = g0.param_gradients();

  for (auto& [name, e] : store.entries()) {
    if (!e.trainable) continue;
    const TensorT<Real>& an = grads.at(name);
    GradCheckEntry ent;
    ent.name = name;

    std::vector<int64_t> idx;
    int64_t n = e.value.numel();
    if (n <= max_entries) {
      idx.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    } else {
      RngStream rs(seed, "grad_check/" + name);
      idx = rs.sample_without_replacement(n, max_entries);
    }

    for (int64_t i : idx) {
      Real saved = e.value.data[static_cast<size_t>(i)];
      e.value.data[static_cast<size_t>(i)] = Real(double(saved) + step);
      double fp = eval();
      e.value.data[static_cast<size_t>(i)] = Real(double(saved) - step);
      double fm = eval();
      e.value.data[static_cast<size_t>(i)] = saved;
      double fd = (fp - fm) / (2.0 * step);
      double av = double(an.data[static_cast<size_t>(i)]);
      double abs_err = std::fabs(fd - av);
      double rel_err = abs_err / std::max({1.0, std::fabs(fd), std::fabs(av)});
      ent.max_abs_err = std::max(ent.max_abs_err, abs_err);
      ent.max_rel_err = std::max(ent.max_rel_err, rel_err);
      ++ent.checked;
    }
    rep.max_abs_err = std::max(rep.max_abs_err, ent.max_abs_err);
    rep.max_rel_err = std::max(rep.max_rel_err, ent.max_rel_err);
    rep.per_param.push_back(std::move(ent));
  }
  return rep;
}

}  // namespace clamp::core
