// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "clamp/contrastive/siglip.hpp"
#include "clamp/harness/data.hpp"

namespace clamp::harness {

// ---- artifacts ----
// A checkpoint file plus a JSON sidecar ("<path>.json") carrying the run
// kind, step, both config digests, and — for policy artifacts — the action
// normalizer and observation statistics fitted on the pretraining set.

struct ArtifactInfo {
  std::string kind;  // "encoders" | "policy"
  int64_t step = 0;
  uint64_t config_hash = 0;
  uint64_t arch_hash = 0;
  bool has_policy_aux = false;
  policy::ActionNormalizer an;
  policy::ObsStats os;
};

// encoder towers + shared temperature/bias under "tb"
core::ParamStore64 build_encoder_store(const RunConfig& cfg, uint64_t seed);
core::ParamStore64 build_policy_store(const RunConfig& cfg, uint64_t seed);

void save_artifact(const core::ParamStore64& ps, const RunConfig& cfg, const std::string& kind,
                   int64_t step, const std::string& path,
                   const policy::ActionNormalizer* an = nullptr,
                   const policy::ObsStats* os = nullptr);
// store must already hold identically-shaped parameters (build_* with the
// same config); refuses kind or architecture-digest mismatches
ArtifactInfo load_artifact_into(core::ParamStore64& ps, const RunConfig& cfg,
                                const std::string& expected_kind, const std::string& path,
                                bool check_arch = true);
ArtifactInfo read_artifact_info(const std::string& path);

// ---- losses ----

// mean of the three pairwise sigmoid losses over the batch; optionally
// returns parameter gradients
double triplet_batch_loss(core::ParamStore64& ps, const RunConfig& cfg, const TripletBatch& batch,
                          std::map<std::string, core::Tensor64>* grads = nullptr);

// fixed-draw validation denoising MSE (step index 0 of `rng`), comparable
// across models evaluated on the same example list
double policy_validation_mse(core::ParamStore64& ps, const RunConfig& cfg,
                             const std::vector<policy::PolicyExample>& examples,
                             uint64_t noise_seed);

// ---- training loops ----

struct PretrainResult {
  double first_loss = 0.0;
  double last_loss = 0.0;
  std::string checkpoint;
  std::string policy_checkpoint;  // non-empty when interleave_policy
  std::string log_csv;
};
// contrastive pretraining on cfg.dataset; when cfg.interleave_policy also
// steps a diffusion policy on the same sampled refs each iteration
PretrainResult pretrain_encoders(const RunConfig& cfg);

struct PolicyTrainResult {
  double first_loss = 0.0;
  double last_loss = 0.0;
  std::string checkpoint;
  std::string log_csv;
  std::vector<std::pair<int64_t, double>> val_curve;  // (step, val MSE)
};
// policy trained alone on cfg.dataset; frozen token slots stay empty
PolicyTrainResult pretrain_policy(const RunConfig& cfg);
// loads both checkpoints (arch-checked), freezes the encoders, attaches
// their tokens to every example, reuses the pretraining normalizer/stats
PolicyTrainResult finetune_policy(const RunConfig& cfg, const std::string& encoder_ckpt,
                                  const std::string& policy_ckpt);
// matched-architecture baseline: random init, no frozen tokens
PolicyTrainResult train_policy_scratch(const RunConfig& cfg);

}  // namespace clamp::harness
