// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "clamp/core/graph.hpp"

namespace clamp::stringpe {

// Differentiable-path twins of the standalone encoding: same math, built from
// graph primitives so the generator and frequency matrices train.

template <class Real>
void add_string_params(core::ParamStoreT<Real>& store, const std::string& prefix, int d_qk,
                       bool trainable_freq = true) {
  store.add(prefix + ".gen", {d_qk, d_qk}, core::Init::kZeros);
  auto& w = store.add(prefix + ".freq", {d_qk / 2, 3}, core::Init::kZeros);
  int l = d_qk / 2;
  for (int k = 0; k < l; ++k)
    w.at(k, k % 3) = static_cast<Real>(std::pow(10.0, -4.0 * k / double(l)));
  if (!trainable_freq) store.set_trainable(prefix + ".freq", false);
}

template <class Real>
typename core::GraphT<Real>::Id cayley_graph(core::GraphT<Real>& g,
                                             typename core::GraphT<Real>::Id gen) {
  int d = g.value(gen).shape[0];
  core::TensorT<Real> eye({d, d});
  for (int i = 0; i < d; ++i) eye.at(i, i) = Real(1);
  auto I = g.input(eye);
  auto S = g.sub(gen, g.transpose(gen));
  return g.matmul(g.sub(I, S), g.inverse(g.add(I, S)));
}

// scores = rope(Q P) rope(K P)^T ; rows of (X P) are (P^T x)^T
template <class Real>
typename core::GraphT<Real>::Id string_scores_graph(core::GraphT<Real>& g,
                                                    typename core::GraphT<Real>::Id Q,
                                                    typename core::GraphT<Real>::Id K,
                                                    typename core::GraphT<Real>::Id gen,
                                                    typename core::GraphT<Real>::Id freq,
                                                    const core::TensorT<Real>& coords) {
  auto P = cayley_graph(g, gen);
  auto qe = g.rope_rows(g.matmul(Q, P), freq, coords);
  auto ke = g.rope_rows(g.matmul(K, P), freq, coords);
  return g.matmul(qe, g.transpose(ke));
}

}  // namespace clamp::stringpe
