// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "clamp/enc/blocks.hpp"
#include "clamp/geom/render.hpp"

namespace clamp::enc {

struct EncoderConfig {
  int embed_dim = 64;
  int layers = 2;
  int heads = 4;
  int mlp_dim = 128;
  int patch = 8;
  int action_history = 16;  // H
  int action_dim = 14;
  int text_max_tokens = 256;
  double dropout = 0.0;
  // rotary relative encoding in the vision trunk; off falls back to plain
  // QK^T attention (the parameters vanish with it)
  bool use_string = true;
  bool freeze_string_freq = false;
  // optional learned absolute position table for the vision trunk (default:
  // spatial structure enters only through the rotary coordinates)
  bool vit_abs_pos = false;
  int vit_tokens = 0;  // table rows when vit_abs_pos

  int head_dim() const { return embed_dim / heads; }
  BlockConfig block(bool use_string) const;
  void validate() const;
};

// H × A_dim past actions, oldest first, most recent last. mask[i] true for
// real steps; rows before episode start are all-zero with mask false, and the
// padding always forms a prefix.
struct ActionHistory {
  core::Tensor64 steps;
  std::vector<uint8_t> mask;
};

struct TextSample {
  std::string raw;
  std::vector<int> token_ids;
};

struct EncodeOut {
  core::Id pooled;  // 1 × d unit row
  core::Id tokens;  // n × d pre-pool tokens (after the final layer norm)
};

struct EmbeddingTriplet {
  core::Tensor64 x_img, y_txt, z_act;           // 1 × d unit rows
  core::Tensor64 unpooled_img, unpooled_act;    // P × d and H × d
};

// Per-patch content for the vision trunk: each patch row holds its pixels'
// (D, X, Y, Z) values with the spatial channels taken relative to the patch's
// mean foreground point. The absolute location travels separately in
// coords_out (one 3D row per patch; all-background patches are zero rows).
core::Tensor64 patchify_observation(const geom::MultiViewObservation& obs, int patch,
                                    core::Tensor64* coords_out,
                                    std::vector<uint8_t>* valid_out = nullptr);

void add_image_encoder_params(core::ParamStore64& ps, const std::string& prefix,
                              const EncoderConfig& cfg);
void add_action_encoder_params(core::ParamStore64& ps, const std::string& prefix,
                               const EncoderConfig& cfg);
void add_text_encoder_params(core::ParamStore64& ps, const std::string& prefix,
                             const EncoderConfig& cfg);
// all three under the fixed prefixes "img", "act", "txt"
void add_encoder_params(core::ParamStore64& ps, const EncoderConfig& cfg);

EncodeOut image_encode_graph(core::Graph64& g, const EncoderConfig& cfg, const std::string& prefix,
                             const geom::MultiViewObservation& obs, const DropoutCtx& dc = {});
EncodeOut action_encode_graph(core::Graph64& g, const EncoderConfig& cfg,
                              const std::string& prefix, const ActionHistory& hist,
                              const DropoutCtx& dc = {});
EncodeOut text_encode_graph(core::Graph64& g, const EncoderConfig& cfg, const std::string& prefix,
                            const std::vector<int>& token_ids, const DropoutCtx& dc = {});

// convenience single-sample evaluation (fresh graph, no dropout)
core::Tensor64 encode_image(core::ParamStore64& ps, const EncoderConfig& cfg,
                            const geom::MultiViewObservation& obs,
                            core::Tensor64* unpooled = nullptr);
core::Tensor64 encode_action(core::ParamStore64& ps, const EncoderConfig& cfg,
                             const ActionHistory& hist, core::Tensor64* unpooled = nullptr);
core::Tensor64 encode_text(core::ParamStore64& ps, const EncoderConfig& cfg,
                           const std::vector<int>& token_ids);
EmbeddingTriplet encode_triplet(core::ParamStore64& ps, const EncoderConfig& cfg,
                                const geom::MultiViewObservation& obs, const ActionHistory& hist,
                                const std::vector<int>& token_ids);

}  // namespace clamp::enc
