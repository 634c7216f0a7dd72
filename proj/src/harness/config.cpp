// SPDX-License-Identifier: Apache-2.0
#include "clamp/harness/config.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "clamp/core/rng.hpp"
#include "clamp/world/robot.hpp"

namespace clamp::harness {

using nlohmann::json;

enc::EncoderConfig RunConfig::encoder_config() const {
  enc::EncoderConfig e;
  e.embed_dim = embed;
  e.layers = enc_layers;
  e.heads = enc_heads;
  e.mlp_dim = enc_mlp;
  e.patch = patch;
  e.action_history = history;
  e.action_dim = world::kActionDim;
  e.text_max_tokens = text_tokens;
  e.use_string = use_string;
  e.vit_abs_pos = vit_abs_pos;
  e.vit_tokens = vit_abs_pos ? image_tokens() : 0;
  return e;
}

policy::PolicyConfig RunConfig::policy_config() const {
  policy::PolicyConfig p;
  p.width = pol_width;
  p.enc_layers = pol_enc_layers;
  p.dec_layers = pol_dec_layers;
  p.heads = pol_heads;
  p.mlp = pol_mlp;
  p.chunk = chunk;
  p.action_dim = world::kActionDim;
  p.diffusion_steps = diffusion_steps;
  p.cameras = 2;  // the stored capture rig
  p.rgb_hw = res;
  p.proprio_dim = world::kActionDim;
  p.frozen_embed = embed;
  p.frozen_img_tokens = image_tokens();
  p.frozen_act_tokens = history;
  p.literal_step = literal_step;
  return p;
}

void RunConfig::validate() const {
  encoder_config().validate();
  policy_config().validate();
  if (res < 16 || res % 16 != 0) core::fail("config", "res must be a positive multiple of 16");
  if (views_res <= 0 || views_res % patch != 0)
    core::fail("config", "views_res must be a positive multiple of patch");
  if (voxel <= 0.0) core::fail("config", "voxel must be positive");
  if (batch < 2) core::fail("config", "batch must be at least 2");
  if (pol_batch < 1) core::fail("config", "pol_batch must be at least 1");
  if (steps < 1) core::fail("config", "steps must be positive");
  if (eval_every < 1) core::fail("config", "eval_every must be positive");
  if (enc_lr <= 0.0 || pol_lr <= 0.0) core::fail("config", "learning rates must be positive");
  if (warmup_frac < 0.0 || warmup_frac >= 1.0) core::fail("config", "warmup_frac must be in [0,1)");
  if (episodes_per_task < 1) core::fail("config", "episodes_per_task must be positive");
  if (val_examples < 1) core::fail("config", "val_examples must be positive");
  if (split_tasks(tasks).empty()) core::fail("config", "tasks must name at least one family");
}

std::vector<std::string> split_tasks(const std::string& csv) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : csv + ",") {
    if (c == ',') {
      // trim surrounding spaces
      size_t a = cur.find_first_not_of(" \t");
      size_t b = cur.find_last_not_of(" \t");
      if (a != std::string::npos) out.push_back(cur.substr(a, b - a + 1));
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

namespace {

// every field, in one place; `arch` marks the checkpoint-compatibility subset
template <class F>
void for_each_field(RunConfig& c, F&& f) {
  f("dataset", c.dataset, false);
  f("val_dataset", c.val_dataset, false);
  f("out", c.out, false);
  f("tasks", c.tasks, false);
  f("episodes_per_task", c.episodes_per_task, false);
  f("res", c.res, true);
  f("views_res", c.views_res, true);
  f("voxel", c.voxel, false);
  f("wrist_views", c.wrist_views, true);
  f("embed", c.embed, true);
  f("enc_layers", c.enc_layers, true);
  f("enc_heads", c.enc_heads, true);
  f("enc_mlp", c.enc_mlp, true);
  f("patch", c.patch, true);
  f("history", c.history, true);
  f("text_tokens", c.text_tokens, true);
  f("use_string", c.use_string, true);
  f("vit_abs_pos", c.vit_abs_pos, true);
  f("pol_width", c.pol_width, true);
  f("pol_enc_layers", c.pol_enc_layers, true);
  f("pol_dec_layers", c.pol_dec_layers, true);
  f("pol_heads", c.pol_heads, true);
  f("pol_mlp", c.pol_mlp, true);
  f("chunk", c.chunk, true);
  f("diffusion_steps", c.diffusion_steps, true);
  f("literal_step", c.literal_step, true);
  f("batch", c.batch, false);
  f("pol_batch", c.pol_batch, false);
  f("steps", c.steps, false);
  f("eval_every", c.eval_every, false);
  f("enc_lr", c.enc_lr, false);
  f("pol_lr", c.pol_lr, false);
  f("warmup_frac", c.warmup_frac, false);
  f("seed", c.seed, false);
  f("val_examples", c.val_examples, false);
  f("freeze_encoders", c.freeze_encoders, false);
  f("literal_sign", c.literal_sign, false);
  f("interleave_policy", c.interleave_policy, false);
}

void assign(std::string& dst, const std::string& key, const std::string& raw) {
  std::string v = raw;
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
  dst = v;
}
void assign(bool& dst, const std::string& key, const std::string& raw) {
  if (raw == "true")
    dst = true;
  else if (raw == "false")
    dst = false;
  else
    core::fail("config", "key '" + key + "' expects true/false, got '" + raw + "'");
}
template <class Int>
void assign_int(Int& dst, const std::string& key, const std::string& raw) {
  try {
    size_t used = 0;
    long long v = std::stoll(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    dst = static_cast<Int>(v);
  } catch (const std::exception&) {
    core::fail("config", "key '" + key + "' expects an integer, got '" + raw + "'");
  }
}
void assign(int& dst, const std::string& key, const std::string& raw) { assign_int(dst, key, raw); }
void assign(int64_t& dst, const std::string& key, const std::string& raw) {
  assign_int(dst, key, raw);
}
void assign(uint64_t& dst, const std::string& key, const std::string& raw) {
  assign_int(dst, key, raw);
}
void assign(double& dst, const std::string& key, const std::string& raw) {
  try {
    size_t used = 0;
    dst = std::stod(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
  } catch (const std::exception&) {
    core::fail("config", "key '" + key + "' expects a number, got '" + raw + "'");
  }
}

json to_json(const RunConfig& cfg, bool arch_only) {
  json j = json::object();
  RunConfig& c = const_cast<RunConfig&>(cfg);
  for_each_field(c, [&](const char* name, auto& field, bool arch) {
    if (arch_only && !arch) return;
    j[name] = field;
  });
  return j;
}

}  // namespace

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) core::fail("config", "cannot open '" + path + "'");
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // strip comments (not inside a quoted string)
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line = line.substr(0, i);
        break;
      }
    }
    size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    size_t b = line.find_last_not_of(" \t\r");
    line = line.substr(a, b - a + 1);
    if (line.front() == '[') continue;  // section headers carry no data here
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      core::fail("config", path + ":" + std::to_string(lineno) + ": expected key = value");
    auto trim = [](std::string s) {
      size_t x = s.find_first_not_of(" \t");
      size_t y = s.find_last_not_of(" \t");
      return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      core::fail("config", path + ":" + std::to_string(lineno) + ": empty key or value");
    bool found = false;
    for_each_field(cfg, [&](const char* name, auto& field, bool) {
      if (key == name) {
        assign(field, key, val);
        found = true;
      }
    });
    if (!found) core::fail("config", path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  apply_env_seed(cfg);
  cfg.validate();
  return cfg;
}

void apply_env_seed(RunConfig& cfg) {
  const char* env = std::getenv("CLAMP_SEED");
  if (!env || !*env) return;
  std::string raw(env);
  assign(cfg.seed, "CLAMP_SEED", raw);
}

std::string canonical_json(const RunConfig& cfg) { return to_json(cfg, false).dump(); }
std::string arch_json(const RunConfig& cfg) { return to_json(cfg, true).dump(); }

uint64_t config_hash(const RunConfig& cfg) { return core::fnv1a64(canonical_json(cfg)); }
uint64_t arch_hash(const RunConfig& cfg) { return core::fnv1a64(arch_json(cfg)); }

}  // namespace clamp::harness
