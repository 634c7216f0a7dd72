// SPDX-License-Identifier: Apache-2.0
#include "clamp/policy/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace clamp::policy {

using core::Graph64;
using core::Id;
using core::Init;
using core::ParamStore64;
using core::Tensor64;

namespace {

// conv stem channel progression; kernel 2 stride 2, so four blocks take the
// edge from hw to hw/16 with no padding
constexpr int kStemCh[4] = {8, 16, 32, 64};

std::string cam_prefix(int cam) { return "pol.stem.c" + std::to_string(cam); }

}  // namespace

enc::BlockConfig PolicyConfig::block() const {
  enc::BlockConfig bc;
  bc.embed = width;
  bc.heads = heads;
  bc.mlp = mlp;
  return bc;
}

void PolicyConfig::validate() const {
  block().validate();
  if (enc_layers < 1 || dec_layers < 1) core::fail("policy_config", "need at least one layer");
  if (chunk < 1 || action_dim < 1) core::fail("policy_config", "chunk and action_dim must be >= 1");
  if (diffusion_steps < 1) core::fail("policy_config", "diffusion_steps must be >= 1");
  if (cameras < 1) core::fail("policy_config", "need at least one camera");
  if (rgb_hw < 16 || rgb_hw % 16 != 0)
    core::fail("policy_config", "rgb_hw must be a positive multiple of 16");
  if (proprio_dim < 1) core::fail("policy_config", "proprio_dim must be >= 1");
  if (frozen_img_tokens < 0 || frozen_act_tokens < 0)
    core::fail("policy_config", "frozen token counts must be >= 0");
  if ((frozen_img_tokens > 0 || frozen_act_tokens > 0) && frozen_embed < 1)
    core::fail("policy_config", "frozen_embed must be >= 1 when frozen slots exist");
}

void add_policy_params(ParamStore64& ps, const PolicyConfig& cfg) {
  cfg.validate();
  for (int cam = 0; cam < cfg.cameras; ++cam) {
    std::string p = cam_prefix(cam);
    int in_ch = 3;
    for (int j = 0; j < 4; ++j) {
      ps.add(p + ".k" + std::to_string(j) + ".w", {2 * 2 * in_ch, kStemCh[j]}, Init::kXavier);
      ps.add(p + ".k" + std::to_string(j) + ".b", {1, kStemCh[j]}, Init::kZeros);
      in_ch = kStemCh[j];
    }
    ps.add(p + ".proj.w", {kStemCh[3], cfg.width}, Init::kXavier);
    ps.add(p + ".proj.b", {1, cfg.width}, Init::kZeros);
  }
  if (cfg.frozen_img_tokens > 0) {
    ps.add("pol.enc.fimg.w", {cfg.frozen_embed, cfg.width}, Init::kXavier);
    ps.add("pol.enc.fimg.b", {1, cfg.width}, Init::kZeros);
  }
  if (cfg.frozen_act_tokens > 0) {
    ps.add("pol.enc.fact.w", {cfg.frozen_embed, cfg.width}, Init::kXavier);
    ps.add("pol.enc.fact.b", {1, cfg.width}, Init::kZeros);
  }
  ps.add("pol.enc.prop.w", {cfg.proprio_dim, cfg.width}, Init::kXavier);
  ps.add("pol.enc.prop.b", {1, cfg.width}, Init::kZeros);
  ps.add("pol.enc.pos", {cfg.enc_slots(), cfg.width}, Init::kNormal, 0.02);
  enc::BlockConfig bc = cfg.block();
  for (int l = 0; l < cfg.enc_layers; ++l)
    enc::add_block_params(ps, "pol.enc.L" + std::to_string(l), bc);
  enc::add_ln_params(ps, "pol.enc.lnf", cfg.width);

  ps.add("pol.dec.embed.w", {cfg.action_dim, cfg.width}, Init::kXavier);
  ps.add("pol.dec.embed.b", {1, cfg.width}, Init::kZeros);
  ps.add("pol.dec.pos", {cfg.chunk, cfg.width}, Init::kNormal, 0.02);
  ps.add("pol.dec.k", {cfg.diffusion_steps, cfg.width}, Init::kNormal, 0.02);
  for (int l = 0; l < cfg.dec_layers; ++l) {
    std::string p = "pol.dec.L" + std::to_string(l);
    enc::add_ln_params(ps, p + ".ln1", cfg.width);
    enc::add_attention_params(ps, p + ".attn", bc);
    enc::add_ln_params(ps, p + ".ln2", cfg.width);
    enc::add_attention_params(ps, p + ".xattn", bc);
    enc::add_ln_params(ps, p + ".ln3", cfg.width);
    ps.add(p + ".mlp.w1", {cfg.width, cfg.mlp}, Init::kXavier);
    ps.add(p + ".mlp.b1", {1, cfg.mlp}, Init::kZeros);
    ps.add(p + ".mlp.w2", {cfg.mlp, cfg.width}, Init::kXavier);
    ps.add(p + ".mlp.b2", {1, cfg.width}, Init::kZeros);
  }
  enc::add_ln_params(ps, "pol.dec.lnf", cfg.width);
  ps.add("pol.head.w", {cfg.width, cfg.action_dim}, Init::kXavier);
  ps.add("pol.head.b", {1, cfg.action_dim}, Init::kZeros);
}

namespace {

Id stem_graph(Graph64& g, const PolicyConfig& cfg, int cam, Id x) {
  std::string p = cam_prefix(cam);
  int h = cfg.rgb_hw, c = 3;
  for (int j = 0; j < 4; ++j) {
    std::string kp = p + ".k" + std::to_string(j);
    x = g.im2col(x, h, h, c, 2, 2);
    x = g.relu(g.add_bias(g.matmul(x, g.param(kp + ".w")), g.param(kp + ".b")));
    h /= 2;
    c = kStemCh[j];
  }
  return g.add_bias(g.matmul(x, g.param(p + ".proj.w")), g.param(p + ".proj.b"));
}

Id decoder_block(Graph64& g, const std::string& p, const enc::BlockConfig& bc, Id x, Id mem) {
  Id h1 = g.layer_norm(x, g.param(p + ".ln1.g"), g.param(p + ".ln1.b"));
  x = g.add(x, enc::attention_graph(g, p + ".attn", bc, h1, h1, nullptr, -1, {}));
  Id h2 = g.layer_norm(x, g.param(p + ".ln2.g"), g.param(p + ".ln2.b"));
  x = g.add(x, enc::attention_graph(g, p + ".xattn", bc, h2, mem, nullptr, -1, {}));
  Id h3 = g.layer_norm(x, g.param(p + ".ln3.g"), g.param(p + ".ln3.b"));
  Id m = g.gelu(g.add_bias(g.matmul(h3, g.param(p + ".mlp.w1")), g.param(p + ".mlp.b1")));
  m = g.add_bias(g.matmul(m, g.param(p + ".mlp.w2")), g.param(p + ".mlp.b2"));
  return g.add(x, m);
}

void check_shape(const Tensor64& t, int rows, int cols, const char* what) {
  if (t.rank() != 2 || t.shape[0] != rows || t.shape[1] != cols)
    core::fail("policy", std::string(what) + ": expected (" + std::to_string(rows) + "," +
                             std::to_string(cols) + "), got " + core::shape_str(t.shape));
}

}  // namespace

PolicyTokens obs_tokens(Graph64& g, const PolicyConfig& cfg, const PolicyObservation& obs) {
  if (static_cast<int>(obs.rgb.size()) != cfg.cameras)
    core::fail("policy", "expected " + std::to_string(cfg.cameras) + " camera images, got " +
                             std::to_string(obs.rgb.size()));
  PolicyTokens t;
  for (int cam = 0; cam < cfg.cameras; ++cam) {
    check_shape(obs.rgb[static_cast<size_t>(cam)], cfg.rgb_hw * cfg.rgb_hw, 3, "rgb");
    t.rgb.push_back(g.input(obs.rgb[static_cast<size_t>(cam)]));
  }
  check_shape(obs.proprio, 1, cfg.proprio_dim, "proprio");
  t.proprio = g.input(obs.proprio);
  if (obs.frozen_img.numel() > 0) {
    check_shape(obs.frozen_img, cfg.frozen_img_tokens, cfg.frozen_embed, "frozen_img");
    t.frozen_img = g.input(obs.frozen_img);
  }
  if (obs.frozen_act.numel() > 0) {
    check_shape(obs.frozen_act, cfg.frozen_act_tokens, cfg.frozen_embed, "frozen_act");
    t.frozen_act = g.input(obs.frozen_act);
  }
  return t;
}

Id policy_noise_graph(Graph64& g, const PolicyConfig& cfg, const PolicyTokens& toks, Id noised,
                      int k) {
  if (k < 0 || k >= cfg.diffusion_steps)
    core::fail("policy", "timestep index " + std::to_string(k) + " outside [0," +
                             std::to_string(cfg.diffusion_steps) + ")");
  if (static_cast<int>(toks.rgb.size()) != cfg.cameras)
    core::fail("policy", "wrong camera count in tokens");
  const Tensor64& nv = g.value(noised);
  if (nv.rank() != 2 || nv.shape[0] != cfg.chunk || nv.shape[1] != cfg.action_dim)
    core::fail("policy", "noised chunk must be (" + std::to_string(cfg.chunk) + "," +
                             std::to_string(cfg.action_dim) + "), got " + core::shape_str(nv.shape));
  if (toks.frozen_img >= 0 && cfg.frozen_img_tokens == 0)
    core::fail("policy", "frozen image tokens supplied but the config has no slot for them");
  if (toks.frozen_act >= 0 && cfg.frozen_act_tokens == 0)
    core::fail("policy", "frozen action tokens supplied but the config has no slot for them");

  // fused observation tokens; position rows are tied to fixed slots so the
  // pretraining layout is a strict subset of the fine-tuning layout
  int spc = cfg.stem_tokens_per_cam();
  std::vector<Id> parts;
  std::vector<int> slots;
  for (int cam = 0; cam < cfg.cameras; ++cam) {
    parts.push_back(stem_graph(g, cfg, cam, toks.rgb[static_cast<size_t>(cam)]));
    for (int i = 0; i < spc; ++i) slots.push_back(cam * spc + i);
  }
  int base = cfg.cameras * spc;
  if (toks.frozen_img >= 0) {
    parts.push_back(g.add_bias(g.matmul(toks.frozen_img, g.param("pol.enc.fimg.w")),
                               g.param("pol.enc.fimg.b")));
    for (int i = 0; i < cfg.frozen_img_tokens; ++i) slots.push_back(base + i);
  }
  if (toks.frozen_act >= 0) {
    parts.push_back(g.add_bias(g.matmul(toks.frozen_act, g.param("pol.enc.fact.w")),
                               g.param("pol.enc.fact.b")));
    for (int i = 0; i < cfg.frozen_act_tokens; ++i)
      slots.push_back(base + cfg.frozen_img_tokens + i);
  }
  if (toks.proprio < 0) core::fail("policy", "missing proprio token");
  parts.push_back(
      g.add_bias(g.matmul(toks.proprio, g.param("pol.enc.prop.w")), g.param("pol.enc.prop.b")));
  slots.push_back(base + cfg.frozen_img_tokens + cfg.frozen_act_tokens);

  Id x = parts.size() == 1 ? parts[0] : g.concat_rows(parts);
  x = g.add(x, g.gather_rows(g.param("pol.enc.pos"), slots));
  enc::BlockConfig bc = cfg.block();
  Id mem = enc::transformer_stack(g, "pol.enc", bc, cfg.enc_layers, x, nullptr, -1, {});

  // decoder: timestep row ahead of the positioned chunk tokens
  Id d = g.add_bias(g.matmul(noised, g.param("pol.dec.embed.w")), g.param("pol.dec.embed.b"));
  d = g.add(d, g.param("pol.dec.pos"));
  Id kt = g.gather_rows(g.param("pol.dec.k"), {k});
  d = g.concat_rows({kt, d});
  for (int l = 0; l < cfg.dec_layers; ++l)
    d = decoder_block(g, "pol.dec.L" + std::to_string(l), bc, d, mem);
  d = g.layer_norm(d, g.param("pol.dec.lnf.g"), g.param("pol.dec.lnf.b"));
  d = g.slice_rows(d, 1, cfg.chunk + 1);
  return g.add_bias(g.matmul(d, g.param("pol.head.w")), g.param("pol.head.b"));
}

Tensor64 predict_noise(ParamStore64& ps, const PolicyConfig& cfg, const PolicyObservation& obs,
                       const Tensor64& noised, int k) {
  Graph64 g(&ps);
  PolicyTokens toks = obs_tokens(g, cfg, obs);
  Id out = policy_noise_graph(g, cfg, toks, g.input(noised), k);
  return g.value(out);
}

Id policy_batch_loss_graph(Graph64& g, const PolicyConfig& cfg,
                           const std::vector<PolicyExample>& batch, const NoiseSchedule& sched,
                           const core::CounterRng& rng, uint64_t step) {
  if (batch.empty()) core::fail("policy", "batch must be nonempty");
  if (sched.K != cfg.diffusion_steps)
    core::fail("policy", "schedule has " + std::to_string(sched.K) + " steps, config wants " +
                             std::to_string(cfg.diffusion_steps));
  int64_t ca = static_cast<int64_t>(cfg.chunk) * cfg.action_dim;
  std::vector<Id> losses;
  for (size_t i = 0; i < batch.size(); ++i) {
    const PolicyExample& ex = batch[i];
    check_shape(ex.a0, cfg.chunk, cfg.action_dim, "a0");
    uint64_t draw = step * batch.size() + i;
    int k = static_cast<int>(rng.uniform("policy/k", draw) * sched.K);
    if (k >= sched.K) k = sched.K - 1;
    Tensor64 eps({cfg.chunk, cfg.action_dim});
    for (int64_t j = 0; j < ca; ++j)
      eps[j] = rng.normal("policy/eps", draw * static_cast<uint64_t>(ca) + static_cast<uint64_t>(j));
    Tensor64 noised = add_noise(ex.a0, k, eps, sched);
    PolicyTokens toks = obs_tokens(g, cfg, ex.obs);
    Id pred = policy_noise_graph(g, cfg, toks, g.input(noised), k);
    losses.push_back(g.mse(g.input(eps), pred));
  }
  return g.mean_of(losses);
}

double policy_batch_loss(ParamStore64& ps, const PolicyConfig& cfg,
                         const std::vector<PolicyExample>& batch, const NoiseSchedule& sched,
                         const core::CounterRng& rng, uint64_t step) {
  Graph64 g(&ps);
  return g.scalar_value(policy_batch_loss_graph(g, cfg, batch, sched, rng, step));
}

double policy_train_step(ParamStore64& ps, const PolicyConfig& cfg,
                         const std::vector<PolicyExample>& batch, const NoiseSchedule& sched,
                         core::Adam64& opt, double lr, const core::CounterRng& rng,
                         uint64_t step) {
  Graph64 g(&ps);
  Id loss = policy_batch_loss_graph(g, cfg, batch, sched, rng, step);
  double out = g.scalar_value(loss);
  g.backward(loss);
  opt.step(ps, g.param_gradients(), lr);
  return out;
}

Tensor64 denoise_step(ParamStore64& ps, const PolicyConfig& cfg, const PolicyObservation& obs,
                      const Tensor64& a_k, int k, const NoiseSchedule& sched,
                      const Tensor64& noise_draw) {
  sched.check_step(k);
  Tensor64 eps_hat = predict_noise(ps, cfg, obs, a_k, k - 1);
  return denoise_from_estimate(a_k, eps_hat, k, sched, noise_draw, !cfg.literal_step);
}

Tensor64 sample_chunk(ParamStore64& ps, const PolicyConfig& cfg, const PolicyObservation& obs,
                      const NoiseSchedule& sched, const core::CounterRng& rng,
                      const std::string& tag) {
  Tensor64 a({cfg.chunk, cfg.action_dim});
  for (int64_t j = 0; j < a.numel(); ++j)
    a[j] = rng.normal("sample/" + tag + "/init", static_cast<uint64_t>(j));
  for (int k = sched.K; k >= 1; --k) {
    Tensor64 z({cfg.chunk, cfg.action_dim});
    for (int64_t j = 0; j < z.numel(); ++j)
      z[j] = rng.normal("sample/" + tag + "/k" + std::to_string(k), static_cast<uint64_t>(j));
    a = denoise_step(ps, cfg, obs, a, k, sched, z);
  }
  return a;
}

ActionNormalizer ActionNormalizer::fit(const std::vector<Tensor64>& chunks) {
  if (chunks.empty()) core::fail("action_norm", "no chunks to fit");
  int cols = chunks[0].cols();
  ActionNormalizer n;
  n.lo = Tensor64({1, cols});
  n.hi = Tensor64({1, cols});
  for (int j = 0; j < cols; ++j) {
    n.lo[j] = std::numeric_limits<double>::infinity();
    n.hi[j] = -std::numeric_limits<double>::infinity();
  }
  for (const Tensor64& c : chunks) {
    if (c.rank() != 2 || c.cols() != cols)
      core::fail("action_norm", "inconsistent chunk shape " + core::shape_str(c.shape));
    for (int r = 0; r < c.rows(); ++r)
      for (int j = 0; j < cols; ++j) {
        double v = c.at(r, j);
        if (v < n.lo[j]) n.lo[j] = v;
        if (v > n.hi[j]) n.hi[j] = v;
      }
  }
  return n;
}

Tensor64 ActionNormalizer::normalize(const Tensor64& a) const {
  int cols = lo.cols();
  if (a.rank() != 2 || a.cols() != cols)
    core::fail("action_norm", "expected " + std::to_string(cols) + " columns, got " +
                                  core::shape_str(a.shape));
  Tensor64 out(a.shape);
  for (int r = 0; r < a.rows(); ++r)
    for (int j = 0; j < cols; ++j) {
      double range = hi[j] - lo[j];
      out.at(r, j) = range < 1e-12 ? 0.0 : 2.0 * (a.at(r, j) - lo[j]) / range - 1.0;
    }
  return out;
}

Tensor64 ActionNormalizer::denormalize(const Tensor64& a) const {
  int cols = lo.cols();
  if (a.rank() != 2 || a.cols() != cols)
    core::fail("action_norm", "expected " + std::to_string(cols) + " columns, got " +
                                  core::shape_str(a.shape));
  Tensor64 out(a.shape);
  for (int r = 0; r < a.rows(); ++r)
    for (int j = 0; j < cols; ++j) {
      double range = hi[j] - lo[j];
      out.at(r, j) = range < 1e-12 ? lo[j] : lo[j] + (a.at(r, j) + 1.0) * range / 2.0;
    }
  return out;
}

ObsStats ObsStats::fit(const std::vector<PolicyObservation>& obs) {
  if (obs.empty()) core::fail("obs_stats", "no observations to fit");
  int pd = obs[0].proprio.cols();
  ObsStats s;
  s.proprio_mean = Tensor64({1, pd});
  s.proprio_std = Tensor64({1, pd});
  for (int j = 0; j < pd; ++j) {
    double sum = 0, sq = 0;
    for (const PolicyObservation& o : obs) {
      if (o.proprio.cols() != pd) core::fail("obs_stats", "inconsistent proprio width");
      double v = o.proprio[j];
      sum += v;
      sq += v * v;
    }
    double m = sum / static_cast<double>(obs.size());
    double var = sq / static_cast<double>(obs.size()) - m * m;
    s.proprio_mean[j] = m;
    s.proprio_std[j] = std::max(std::sqrt(std::max(var, 0.0)), 1e-8);
  }
  double sum = 0, sq = 0;
  int64_t count = 0;
  for (const PolicyObservation& o : obs)
    for (const Tensor64& img : o.rgb)
      for (int64_t i = 0; i < img.numel(); ++i) {
        sum += img[i];
        sq += img[i] * img[i];
        ++count;
      }
  if (count > 0) {
    s.rgb_mean = sum / static_cast<double>(count);
    double var = sq / static_cast<double>(count) - s.rgb_mean * s.rgb_mean;
    s.rgb_std = std::max(std::sqrt(std::max(var, 0.0)), 1e-8);
  }
  return s;
}

PolicyObservation ObsStats::apply(const PolicyObservation& o) const {
  PolicyObservation out = o;
  int pd = proprio_mean.cols();
  if (out.proprio.cols() != pd) core::fail("obs_stats", "proprio width mismatch");
  for (int j = 0; j < pd; ++j) out.proprio[j] = (o.proprio[j] - proprio_mean[j]) / proprio_std[j];
  for (Tensor64& img : out.rgb)
    for (int64_t i = 0; i < img.numel(); ++i) img[i] = (img[i] - rgb_mean) / rgb_std;
  return out;
}

}  // namespace clamp::policy
