// SPDX-License-Identifier: Apache-2.0
#include "clamp/contrastive/siglip.hpp"

#include <cmath>

namespace clamp::contrastive {

using core::Graph64;
using core::Id;
using core::ParamStore64;
using core::Tensor64;

namespace {

double softplus_stable(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

void check_pair(const Tensor64& X, const Tensor64& Y) {
  if (X.rank() != 2 || Y.rank() != 2 || X.shape != Y.shape)
    core::fail("contrastive", "embedding shape mismatch " + core::shape_str(X.shape) + " vs " +
                                  core::shape_str(Y.shape));
  if (X.shape[0] < 1) core::fail("contrastive", "batch must be nonempty");
}

}  // namespace

Tensor64 pairwise_logits(const Tensor64& X, const Tensor64& Y, const TempBias& tb,
                         bool literal_sign) {
  check_pair(X, Y);
  int B = X.shape[0], d = X.shape[1];
  Tensor64 z({B, B});
  core::matmul_nt(X.data.data(), Y.data.data(), z.data.data(), B, d, B);
  double t = tb.t(), b = literal_sign ? -tb.b : tb.b;
  for (int64_t i = 0; i < z.numel(); ++i) z[i] = t * z[i] + b;
  return z;
}

Tensor64 sign_labels(int batch) {
  Tensor64 l = Tensor64::full({batch, batch}, -1.0);
  for (int i = 0; i < batch; ++i) l.at(i, i) = 1.0;
  return l;
}

double siglip_pair_loss(const Tensor64& X, const Tensor64& Y, const TempBias& tb,
                        bool literal_sign) {
  Tensor64 z = pairwise_logits(X, Y, tb, literal_sign);
  int B = z.shape[0];
  double acc = 0;
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < B; ++j) {
      double l = i == j ? 1.0 : -1.0;
      acc += softplus_stable(-l * z.at(i, j));
    }
  return acc / B;
}

double tri_modal_loss(const Tensor64& X_img, const Tensor64& Y_txt, const Tensor64& Z_act,
                      const TempBias& tb, bool literal_sign) {
  return (siglip_pair_loss(X_img, Y_txt, tb, literal_sign) +
          siglip_pair_loss(X_img, Z_act, tb, literal_sign) +
          siglip_pair_loss(Y_txt, Z_act, tb, literal_sign)) /
         3.0;
}

Tensor64 matching_probabilities(const Tensor64& X, const Tensor64& Y, const TempBias& tb,
                                bool literal_sign) {
  Tensor64 z = pairwise_logits(X, Y, tb, literal_sign);
  for (int64_t i = 0; i < z.numel(); ++i) z[i] = 1.0 / (1.0 + std::exp(-z[i]));
  return z;
}

void add_temp_bias_params(ParamStore64& ps, const std::string& prefix) {
  TempBias init;
  ps.add(prefix + ".logt", {1, 1}, core::Init::kConst, init.log_t);
  ps.add(prefix + ".b", {1, 1}, core::Init::kConst, init.b);
}

TempBias read_temp_bias(const ParamStore64& ps, const std::string& prefix) {
  TempBias tb;
  tb.log_t = ps.get(prefix + ".logt")[0];
  tb.b = ps.get(prefix + ".b")[0];
  return tb;
}

Id siglip_pair_loss_graph(Graph64& g, Id X, Id Y, const std::string& tb_prefix,
                          bool literal_sign) {
  const Tensor64& xv = g.value(X);
  check_pair(xv, g.value(Y));
  int B = xv.shape[0];
  Id t = g.exp_(g.param(tb_prefix + ".logt"));
  Id b = g.param(tb_prefix + ".b");
  if (literal_sign) b = g.scale(b, -1.0);
  Id z = g.shift_by(g.scale_by(g.matmul(X, g.transpose(Y)), t), b);
  Id neg_lz = g.scale(g.mul(z, g.input(sign_labels(B))), -1.0);
  return g.scale(g.sum(g.softplus(neg_lz)), 1.0 / B);
}

Id tri_modal_loss_graph(Graph64& g, Id X_img, Id Y_txt, Id Z_act, const std::string& tb_prefix,
                        bool literal_sign) {
  Id a = siglip_pair_loss_graph(g, X_img, Y_txt, tb_prefix, literal_sign);
  Id b = siglip_pair_loss_graph(g, X_img, Z_act, tb_prefix, literal_sign);
  Id c = siglip_pair_loss_graph(g, Y_txt, Z_act, tb_prefix, literal_sign);
  return g.scale(g.add(g.add(a, b), c), 1.0 / 3.0);
}

}  // namespace clamp::contrastive
