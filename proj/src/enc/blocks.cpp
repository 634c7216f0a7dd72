// SPDX-License-Identifier: Apache-2.0
#include "clamp/enc/blocks.hpp"

#include <cmath>

#include "clamp/stringpe/string_graph.hpp"

namespace clamp::enc {

using core::Graph64;
using core::Id;
using core::Init;
using core::ParamStore64;
using core::Tensor64;

void BlockConfig::validate() const {
  if (embed <= 0 || heads <= 0 || embed % heads != 0)
    core::fail("block_config", "embed " + std::to_string(embed) + " must be a positive multiple of heads " +
                                   std::to_string(heads));
  if (use_string && head_dim() % 2 != 0)
    core::fail("block_config", "head dim must be even for the rotary score path");
  if (mlp <= 0) core::fail("block_config", "mlp width must be positive");
  if (dropout < 0.0 || dropout >= 1.0) core::fail("block_config", "dropout must be in [0,1)");
}

void add_ln_params(ParamStore64& ps, const std::string& prefix, int d) {
  ps.add(prefix + ".g", {1, d}, Init::kOnes);
  ps.add(prefix + ".b", {1, d}, Init::kZeros);
}

void add_attention_params(ParamStore64& ps, const std::string& prefix, const BlockConfig& cfg) {
  cfg.validate();
  int d = cfg.embed;
  for (const char* w : {".wq", ".wk", ".wv", ".wo"}) ps.add(prefix + w, {d, d}, Init::kXavier);
  for (const char* b : {".bq", ".bk", ".bv", ".bo"}) ps.add(prefix + b, {1, d}, Init::kZeros);
  if (cfg.use_string)
    stringpe::add_string_params(ps, prefix + ".string", cfg.head_dim(), !cfg.freeze_string_freq);
}

void add_block_params(ParamStore64& ps, const std::string& prefix, const BlockConfig& cfg) {
  int d = cfg.embed;
  add_ln_params(ps, prefix + ".ln1", d);
  add_attention_params(ps, prefix + ".attn", cfg);
  add_ln_params(ps, prefix + ".ln2", d);
  ps.add(prefix + ".mlp.w1", {d, cfg.mlp}, Init::kXavier);
  ps.add(prefix + ".mlp.b1", {1, cfg.mlp}, Init::kZeros);
  ps.add(prefix + ".mlp.w2", {cfg.mlp, d}, Init::kXavier);
  ps.add(prefix + ".mlp.b2", {1, d}, Init::kZeros);
}

void add_map_params(ParamStore64& ps, const std::string& prefix, const BlockConfig& cfg) {
  ps.add(prefix + ".q", {1, cfg.embed}, Init::kNormal, 0.02);
  BlockConfig plain = cfg;
  plain.use_string = false;  // the pooling query has no spatial coordinate
  add_attention_params(ps, prefix, plain);
}

Id attention_graph(Graph64& g, const std::string& prefix, const BlockConfig& cfg, Id xq, Id xkv,
                   const Tensor64* coords, Id key_mask, const DropoutCtx& dc) {
  int d = cfg.embed, dh = cfg.head_dim();
  if (cfg.use_string && coords == nullptr)
    core::fail("attention", "rotary score path needs per-token coords");
  Id q = g.add_bias(g.matmul(xq, g.param(prefix + ".wq")), g.param(prefix + ".bq"));
  Id k = g.add_bias(g.matmul(xkv, g.param(prefix + ".wk")), g.param(prefix + ".bk"));
  Id v = g.add_bias(g.matmul(xkv, g.param(prefix + ".wv")), g.param(prefix + ".bv"));
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Id> heads;
  heads.reserve(static_cast<size_t>(cfg.heads));
  for (int h = 0; h < cfg.heads; ++h) {
    Id qh = g.slice_cols(q, h * dh, (h + 1) * dh);
    Id kh = g.slice_cols(k, h * dh, (h + 1) * dh);
    Id vh = g.slice_cols(v, h * dh, (h + 1) * dh);
    Id s;
    if (cfg.use_string)
      s = stringpe::string_scores_graph(g, qh, kh, g.param(prefix + ".string.gen"),
                                        g.param(prefix + ".string.freq"), *coords);
    else
      s = g.matmul(qh, g.transpose(kh));
    s = g.scale(s, inv_sqrt);
    if (key_mask >= 0) s = g.add_bias(s, key_mask);
    Id att = g.softmax_rows(s);
    if (dc.rng && cfg.dropout > 0.0)
      att = g.dropout(att, cfg.dropout, *dc.rng, prefix + ".drop.h" + std::to_string(h));
    heads.push_back(g.matmul(att, vh));
  }
  Id cat = heads.size() == 1 ? heads[0] : g.concat_cols(heads);
  Id out = g.add_bias(g.matmul(cat, g.param(prefix + ".wo")), g.param(prefix + ".bo"));
  if (dc.rng && cfg.dropout > 0.0) out = g.dropout(out, cfg.dropout, *dc.rng, prefix + ".drop.o");
  return out;
}

Id encoder_block_graph(Graph64& g, const std::string& prefix, const BlockConfig& cfg, Id x,
                       const Tensor64* coords, Id key_mask, const DropoutCtx& dc) {
  Id h1 = g.layer_norm(x, g.param(prefix + ".ln1.g"), g.param(prefix + ".ln1.b"));
  x = g.add(x, attention_graph(g, prefix + ".attn", cfg, h1, h1, coords, key_mask, dc));
  Id h2 = g.layer_norm(x, g.param(prefix + ".ln2.g"), g.param(prefix + ".ln2.b"));
  Id m = g.gelu(g.add_bias(g.matmul(h2, g.param(prefix + ".mlp.w1")), g.param(prefix + ".mlp.b1")));
  if (dc.rng && cfg.dropout > 0.0) m = g.dropout(m, cfg.dropout, *dc.rng, prefix + ".drop.m");
  m = g.add_bias(g.matmul(m, g.param(prefix + ".mlp.w2")), g.param(prefix + ".mlp.b2"));
  return g.add(x, m);
}

Id transformer_stack(Graph64& g, const std::string& prefix, const BlockConfig& cfg, int layers,
                     Id x, const Tensor64* coords, Id key_mask, const DropoutCtx& dc) {
  if (layers <= 0) core::fail("transformer", "need at least one layer");
  for (int l = 0; l < layers; ++l)
    x = encoder_block_graph(g, prefix + ".L" + std::to_string(l), cfg, x, coords, key_mask, dc);
  return g.layer_norm(x, g.param(prefix + ".lnf.g"), g.param(prefix + ".lnf.b"));
}

Id map_pool_graph(Graph64& g, const std::string& prefix, const BlockConfig& cfg, Id tokens,
                  Id key_mask) {
  BlockConfig plain = cfg;
  plain.use_string = false;
  return attention_graph(g, prefix, plain, g.param(prefix + ".q"), tokens, nullptr, key_mask, {});
}

Tensor64 mask_row(const std::vector<uint8_t>& live) {
  Tensor64 m({1, static_cast<int>(live.size())});
  for (size_t i = 0; i < live.size(); ++i) m[static_cast<int64_t>(i)] = live[i] ? 0.0 : kMaskNegInf;
  return m;
}

}  // namespace clamp::enc
