// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "clamp/core/graph.hpp"
#include "clamp/core/param_store.hpp"

namespace clamp::contrastive {

// learnable temperature (stored as log t, so t stays positive) and bias
struct TempBias {
  double log_t = 2.302585092994045684;  // log 10
  double b = -10.0;
  double t() const { return std::exp(log_t); }
};

// The sign decision: the standard sigmoid-contrastive form uses
// z = t*dot + b, which at the published init (t=10, b=-10) starts matched
// pairs near zero logit, matching the stated purpose of the bias. The
// printed equations read z = t*dot - b; literal_sign selects that form.
inline constexpr bool kLiteralSignDefault = false;

// z_ij = t * <x_i, y_j> + b   (or t*dot - b in literal mode), B×B
core::Tensor64 pairwise_logits(const core::Tensor64& X, const core::Tensor64& Y,
                               const TempBias& tb, bool literal_sign = kLiteralSignDefault);

// labels: +1 on the diagonal, -1 off it
core::Tensor64 sign_labels(int batch);

// -(1/B) sum_ij log sigmoid(l_ij * z_ij), evaluated as softplus(-l*z)
double siglip_pair_loss(const core::Tensor64& X, const core::Tensor64& Y, const TempBias& tb,
                        bool literal_sign = kLiteralSignDefault);

// mean of the three pair losses (image-text, image-action, text-action),
// all sharing one TempBias
double tri_modal_loss(const core::Tensor64& X_img, const core::Tensor64& Y_txt,
                      const core::Tensor64& Z_act, const TempBias& tb,
                      bool literal_sign = kLiteralSignDefault);

// sigmoid(z_ij) entrywise
core::Tensor64 matching_probabilities(const core::Tensor64& X, const core::Tensor64& Y,
                                      const TempBias& tb,
                                      bool literal_sign = kLiteralSignDefault);

// trainable (log t, b) under "<prefix>.logt" / "<prefix>.b", init (log 10, -10)
void add_temp_bias_params(core::ParamStore64& ps, const std::string& prefix);
TempBias read_temp_bias(const core::ParamStore64& ps, const std::string& prefix);

// differentiable forms; X/Y are B×d nodes, temperature/bias read from params
core::Id siglip_pair_loss_graph(core::Graph64& g, core::Id X, core::Id Y,
                                const std::string& tb_prefix,
                                bool literal_sign = kLiteralSignDefault);
core::Id tri_modal_loss_graph(core::Graph64& g, core::Id X_img, core::Id Y_txt, core::Id Z_act,
                              const std::string& tb_prefix,
                              bool literal_sign = kLiteralSignDefault);

}  // namespace clamp::contrastive
