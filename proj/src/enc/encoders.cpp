// SPDX-License-Identifier: Apache-2.0
#include "clamp/enc/encoders.hpp"

#include "clamp/enc/tokenizer.hpp"

namespace clamp::enc {

using core::Graph64;
using core::Id;
using core::Init;
using core::ParamStore64;
using core::Tensor64;

BlockConfig EncoderConfig::block(bool use_string) const {
  BlockConfig b;
  b.embed = embed_dim;
  b.heads = heads;
  b.mlp = mlp_dim;
  b.dropout = dropout;
  b.use_string = use_string;
  b.freeze_string_freq = freeze_string_freq;
  return b;
}

void EncoderConfig::validate() const {
  block(use_string).validate();
  if (layers <= 0) core::fail("encoder_config", "layers must be positive");
  if (patch <= 0) core::fail("encoder_config", "patch must be positive");
  if (action_history <= 0 || action_dim <= 0)
    core::fail("encoder_config", "action history/dim must be positive");
  if (text_max_tokens <= 0) core::fail("encoder_config", "text_max_tokens must be positive");
  if (vit_abs_pos && vit_tokens <= 0)
    core::fail("encoder_config", "vit_abs_pos needs vit_tokens");
}

Tensor64 patchify_observation(const geom::MultiViewObservation& obs, int patch,
                              Tensor64* coords_out, std::vector<uint8_t>* valid_out) {
  auto [coords, valid] = geom::patch_coords(obs, patch);
  const geom::DXYZImage& img = obs.tiled;
  int ph = img.height / patch, pw = img.width / patch;
  int P = ph * pw;
  Tensor64 content({P, patch * patch * 4});
  for (int py = 0; py < ph; ++py)
    for (int px = 0; px < pw; ++px) {
      int p = py * pw + px;
      for (int dy = 0; dy < patch; ++dy)
        for (int dx = 0; dx < patch; ++dx) {
          int v = py * patch + dy, u = px * patch + dx;
          double d = img.at(v, u, 0);
          if (d <= 0.0) continue;  // background pixels stay all-zero
          int col = (dy * patch + dx) * 4;
          content.at(p, col + 0) = d;
          content.at(p, col + 1) = img.at(v, u, 1) - coords.at(p, 0);
          content.at(p, col + 2) = img.at(v, u, 2) - coords.at(p, 1);
          content.at(p, col + 3) = img.at(v, u, 3) - coords.at(p, 2);
        }
    }
  if (coords_out) *coords_out = std::move(coords);
  if (valid_out) *valid_out = std::move(valid);
  return content;
}

void add_image_encoder_params(ParamStore64& ps, const std::string& prefix,
                              const EncoderConfig& cfg) {
  cfg.validate();
  int in_dim = cfg.patch * cfg.patch * 4;
  ps.add(prefix + ".embed.w", {in_dim, cfg.embed_dim}, Init::kXavier);
  ps.add(prefix + ".embed.b", {1, cfg.embed_dim}, Init::kZeros);
  if (cfg.vit_abs_pos) ps.add(prefix + ".pos", {cfg.vit_tokens, cfg.embed_dim}, Init::kNormal, 0.02);
  BlockConfig blk = cfg.block(cfg.use_string);
  for (int l = 0; l < cfg.layers; ++l) add_block_params(ps, prefix + ".L" + std::to_string(l), blk);
  add_ln_params(ps, prefix + ".lnf", cfg.embed_dim);
  add_map_params(ps, prefix + ".map", cfg.block(false));
}

void add_action_encoder_params(ParamStore64& ps, const std::string& prefix,
                               const EncoderConfig& cfg) {
  cfg.validate();
  ps.add(prefix + ".embed.w", {cfg.action_dim, cfg.embed_dim}, Init::kXavier);
  ps.add(prefix + ".embed.b", {1, cfg.embed_dim}, Init::kZeros);
  ps.add(prefix + ".pos", {cfg.action_history, cfg.embed_dim}, Init::kNormal, 0.02);
  BlockConfig blk = cfg.block(false);
  for (int l = 0; l < cfg.layers; ++l) add_block_params(ps, prefix + ".L" + std::to_string(l), blk);
  add_ln_params(ps, prefix + ".lnf", cfg.embed_dim);
  add_map_params(ps, prefix + ".map", blk);
}

void add_text_encoder_params(ParamStore64& ps, const std::string& prefix,
                             const EncoderConfig& cfg) {
  cfg.validate();
  ps.add(prefix + ".tok", {Vocab::kSize, cfg.embed_dim}, Init::kNormal, 0.02);
  ps.add(prefix + ".pos", {cfg.text_max_tokens, cfg.embed_dim}, Init::kNormal, 0.02);
  BlockConfig blk = cfg.block(false);
  for (int l = 0; l < cfg.layers; ++l) add_block_params(ps, prefix + ".L" + std::to_string(l), blk);
  add_ln_params(ps, prefix + ".lnf", cfg.embed_dim);
  add_map_params(ps, prefix + ".map", blk);
}

void add_encoder_params(ParamStore64& ps, const EncoderConfig& cfg) {
  add_image_encoder_params(ps, "img", cfg);
  add_action_encoder_params(ps, "act", cfg);
  add_text_encoder_params(ps, "txt", cfg);
}

EncodeOut image_encode_graph(Graph64& g, const EncoderConfig& cfg, const std::string& prefix,
                             const geom::MultiViewObservation& obs, const DropoutCtx& dc) {
  Tensor64 coords;
  Tensor64 content = patchify_observation(obs, cfg.patch, &coords);
  if (content.shape[0] < 1) core::fail("image_encode", "no patches");
  Id x = g.add_bias(g.matmul(g.input(std::move(content)), g.param(prefix + ".embed.w")),
                    g.param(prefix + ".embed.b"));
  if (cfg.vit_abs_pos) {
    if (cfg.vit_tokens != coords.shape[0])
      core::fail("image_encode", "vit_tokens " + std::to_string(cfg.vit_tokens) +
                                     " != patch count " + std::to_string(coords.shape[0]));
    x = g.add(x, g.param(prefix + ".pos"));
  }
  Id tokens = transformer_stack(g, prefix, cfg.block(cfg.use_string), cfg.layers, x, &coords, -1, dc);
  Id pooled = map_pool_graph(g, prefix + ".map", cfg.block(false), tokens, -1);
  return {g.l2_normalize_rows(pooled), tokens};
}

EncodeOut action_encode_graph(Graph64& g, const EncoderConfig& cfg, const std::string& prefix,
                              const ActionHistory& hist, const DropoutCtx& dc) {
  int H = cfg.action_history;
  if (hist.steps.rank() != 2 || hist.steps.shape[0] != H || hist.steps.shape[1] != cfg.action_dim)
    core::fail("action_encode", "history must be (" + std::to_string(H) + "," +
                                    std::to_string(cfg.action_dim) + "), got " +
                                    core::shape_str(hist.steps.shape));
  if (static_cast<int>(hist.mask.size()) != H)
    core::fail("action_encode", "mask length must match history");
  for (int i = 0; i < H; ++i)
    if (!hist.mask[static_cast<size_t>(i)])
      for (int j = 0; j < cfg.action_dim; ++j)
        if (hist.steps.at(i, j) != 0.0)
          core::fail("action_encode", "padded steps must be exactly zero");
  Id x = g.add_bias(g.matmul(g.input(hist.steps), g.param(prefix + ".embed.w")),
                    g.param(prefix + ".embed.b"));
  // temporal positions indexed by age (0 = most recent), so the same table
  // rows describe the same steps regardless of the configured history length
  std::vector<int> ages(static_cast<size_t>(H));
  for (int i = 0; i < H; ++i) ages[static_cast<size_t>(i)] = H - 1 - i;
  x = g.add(x, g.gather_rows(g.param(prefix + ".pos"), ages));
  Id mask = g.input(mask_row(hist.mask));
  Id tokens = transformer_stack(g, prefix, cfg.block(false), cfg.layers, x, nullptr, mask, dc);
  Id pooled = map_pool_graph(g, prefix + ".map", cfg.block(false), tokens, mask);
  return {g.l2_normalize_rows(pooled), tokens};
}

EncodeOut text_encode_graph(Graph64& g, const EncoderConfig& cfg, const std::string& prefix,
                            const std::vector<int>& token_ids, const DropoutCtx& dc) {
  int n = static_cast<int>(token_ids.size());
  if (n < 1 || n > cfg.text_max_tokens)
    core::fail("text_encode", "need 1.." + std::to_string(cfg.text_max_tokens) + " ids, got " +
                                  std::to_string(n));
  std::vector<uint8_t> live(static_cast<size_t>(n));
  std::vector<int> positions(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int id = token_ids[static_cast<size_t>(i)];
    if (id < 0 || id >= Vocab::kSize)
      core::fail("text_encode", "token id " + std::to_string(id) + " out of range");
    live[static_cast<size_t>(i)] = id != Vocab::kPad;
    positions[static_cast<size_t>(i)] = i;
  }
  Id x = g.add(g.gather_rows(g.param(prefix + ".tok"), token_ids),
               g.gather_rows(g.param(prefix + ".pos"), positions));
  Id mask = g.input(mask_row(live));
  Id tokens = transformer_stack(g, prefix, cfg.block(false), cfg.layers, x, nullptr, mask, dc);
  Id pooled = map_pool_graph(g, prefix + ".map", cfg.block(false), tokens, mask);
  return {g.l2_normalize_rows(pooled), tokens};
}

Tensor64 encode_image(ParamStore64& ps, const EncoderConfig& cfg,
                      const geom::MultiViewObservation& obs, Tensor64* unpooled) {
  Graph64 g(&ps);
  EncodeOut out = image_encode_graph(g, cfg, "img", obs);
  if (unpooled) *unpooled = g.value(out.tokens);
  return g.value(out.pooled);
}

Tensor64 encode_action(ParamStore64& ps, const EncoderConfig& cfg, const ActionHistory& hist,
                       Tensor64* unpooled) {
  Graph64 g(&ps);
  EncodeOut out = action_encode_graph(g, cfg, "act", hist);
  if (unpooled) *unpooled = g.value(out.tokens);
  return g.value(out.pooled);
}

Tensor64 encode_text(ParamStore64& ps, const EncoderConfig& cfg,
                     const std::vector<int>& token_ids) {
  Graph64 g(&ps);
  return g.value(text_encode_graph(g, cfg, "txt", token_ids).pooled);
}

EmbeddingTriplet encode_triplet(ParamStore64& ps, const EncoderConfig& cfg,
                                const geom::MultiViewObservation& obs, const ActionHistory& hist,
                                const std::vector<int>& token_ids) {
  EmbeddingTriplet t;
  t.x_img = encode_image(ps, cfg, obs, &t.unpooled_img);
  t.z_act = encode_action(ps, cfg, hist, &t.unpooled_act);
  t.y_txt = encode_text(ps, cfg, token_ids);
  return t;
}

}  // namespace clamp::enc
