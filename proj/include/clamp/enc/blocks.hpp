// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "clamp/core/graph.hpp"
#include "clamp/core/param_store.hpp"
#include "clamp/core/rng.hpp"

namespace clamp::enc {

// One transformer block's dimensions. use_string switches self-attention
// scores to the orthogonal-basis rotary path (needs per-token 3D coords).
struct BlockConfig {
  int embed = 64;
  int heads = 4;
  int mlp = 128;
  double dropout = 0.0;
  bool use_string = false;
  bool freeze_string_freq = false;

  int head_dim() const { return embed / heads; }
  void validate() const;
};

// dropout is active only when rng is non-null and p > 0 (training mode)
struct DropoutCtx {
  const core::CounterRng* rng = nullptr;
};

void add_ln_params(core::ParamStore64& ps, const std::string& prefix, int d);
void add_attention_params(core::ParamStore64& ps, const std::string& prefix,
                          const BlockConfig& cfg);
void add_block_params(core::ParamStore64& ps, const std::string& prefix, const BlockConfig& cfg);
void add_map_params(core::ParamStore64& ps, const std::string& prefix, const BlockConfig& cfg);

// Multihead attention. xq: nq×d queries, xkv: nk×d keys/values. coords are
// required when cfg.use_string (self-attention only: nq == nk, shared
// coords). key_mask < 0 means no mask; otherwise a 1×nk additive row
// (0 for live keys, -1e9 for padding) applied before softmax. That constant
// underflows exp to exactly 0, so masked keys contribute nothing at all.
core::Id attention_graph(core::Graph64& g, const std::string& prefix, const BlockConfig& cfg,
                         core::Id xq, core::Id xkv, const core::Tensor64* coords,
                         core::Id key_mask, const DropoutCtx& dc);

// pre-LN block: x + attn(LN(x)); x + mlp(LN(x))
core::Id encoder_block_graph(core::Graph64& g, const std::string& prefix, const BlockConfig& cfg,
                             core::Id x, const core::Tensor64* coords, core::Id key_mask,
                             const DropoutCtx& dc);

// layers × encoder_block then a final layer norm ("<prefix>.L<i>", "<prefix>.lnf")
core::Id transformer_stack(core::Graph64& g, const std::string& prefix, const BlockConfig& cfg,
                           int layers, core::Id x, const core::Tensor64* coords, core::Id key_mask,
                           const DropoutCtx& dc);

// single learned query cross-attends the tokens; returns the 1×d row before
// any normalization
core::Id map_pool_graph(core::Graph64& g, const std::string& prefix, const BlockConfig& cfg,
                        core::Id tokens, core::Id key_mask);

constexpr double kMaskNegInf = -1e9;

// build a 1×n additive mask row: live[i] ? 0 : -1e9
core::Tensor64 mask_row(const std::vector<uint8_t>& live);

}  // namespace clamp::enc
