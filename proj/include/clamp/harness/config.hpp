// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clamp/enc/encoders.hpp"
#include "clamp/policy/policy.hpp"

namespace clamp::harness {

// One flat configuration for every run kind. Loaded from a small TOML file
// (flat `key = value` lines; section headers are ignored), validated before
// any compute. Two digests derive from it:
//   - config_hash: fnv1a64 over the canonical JSON of every field, stamped
//     into artifacts for provenance;
//   - arch_hash: same digest over the architecture-determining subset; a
//     checkpoint only loads into a config with an equal arch_hash.
struct RunConfig {
  // data
  std::string dataset;      // training dataset directory
  std::string val_dataset;  // held-out dataset for selection / validation
  std::string out = "out";  // artifact directory
  std::string tasks = "pick_place";  // comma-separated families (gen-data)
  int episodes_per_task = 16;
  int res = 32;  // stored sensor resolution (square)

  // virtual-view pipeline
  int views_res = 24;   // re-rendered view edge
  double voxel = 0.008;
  bool wrist_views = true;

  // contrastive encoder architecture
  int embed = 48;
  int enc_layers = 2;
  int enc_heads = 4;
  int enc_mlp = 96;
  int patch = 8;
  int history = 16;      // action-history rows
  int text_tokens = 128;  // fixed tokenized text length
  bool use_string = true;
  bool vit_abs_pos = false;

  // diffusion policy architecture
  int pol_width = 64;
  int pol_enc_layers = 1;
  int pol_dec_layers = 2;
  int pol_heads = 4;
  int pol_mlp = 128;
  int chunk = 8;
  int diffusion_steps = 300;
  bool literal_step = true;

  // training
  int batch = 32;      // contrastive batch
  int pol_batch = 8;   // policy batch
  int64_t steps = 2000;
  int64_t eval_every = 500;
  double enc_lr = 1e-3;
  double pol_lr = 3e-4;
  double warmup_frac = 0.05;
  uint64_t seed = 1;
  int val_examples = 64;  // retrieval selection size

  // mode flags
  bool freeze_encoders = true;   // fine-tune keeps encoder towers fixed
  bool literal_sign = false;     // printed-sign SigLIP variant
  bool interleave_policy = false;

  int n_views() const { return wrist_views ? 5 : 3; }
  int image_tokens() const {
    return (views_res / patch) * (n_views() * views_res / patch);
  }
  enc::EncoderConfig encoder_config() const;
  policy::PolicyConfig policy_config() const;
  void validate() const;
};

// parse a TOML file; unknown keys are errors. CLAMP_SEED in the environment
// overrides `seed` after parsing.
RunConfig load_config(const std::string& path);
void apply_env_seed(RunConfig& cfg);

std::string canonical_json(const RunConfig& cfg);
std::string arch_json(const RunConfig& cfg);
uint64_t config_hash(const RunConfig& cfg);
uint64_t arch_hash(const RunConfig& cfg);

std::vector<std::string> split_tasks(const std::string& csv);

}  // namespace clamp::harness
