// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "clamp/core/graph.hpp"
#include "clamp/core/optim.hpp"
#include "clamp/core/param_store.hpp"
#include "clamp/core/rng.hpp"
#include "clamp/enc/blocks.hpp"
#include "clamp/policy/schedule.hpp"

namespace clamp::policy {

// Noise-prediction transformer over fused observation tokens. The encoder
// ingests per-camera conv-stem tokens, optional frozen multimodal tokens
// (absent while pretraining, attached for fine-tuning), and one proprio
// token; the decoder ingests the noised chunk plus a timestep row and emits
// a chunk-shaped noise estimate through a projection head.
//
// Every parameter (including the frozen-token projections and their position
// rows) exists in both modes, so pretrain checkpoints load bit-exactly into
// fine-tune runs and reproduce their losses.
struct PolicyConfig {
  int width = 128;
  int enc_layers = 2;
  int dec_layers = 3;
  int heads = 4;
  int mlp = 256;
  int chunk = 50;        // actions predicted per call
  int action_dim = 14;   // absolute joint targets
  int diffusion_steps = 50;
  std::string schedule_kind = "linear";
  int cameras = 2;
  int rgb_hw = 32;       // square RGB input edge, multiple of 16
  int proprio_dim = 14;
  int frozen_embed = 64;      // column width of attached frozen tokens
  int frozen_img_tokens = 0;  // 0 disables the slot entirely
  int frozen_act_tokens = 0;
  bool literal_step = true;  // reverse step: noise inside the alpha scaling

  int stem_tokens_per_cam() const { return (rgb_hw / 16) * (rgb_hw / 16); }
  int enc_slots() const {
    return cameras * stem_tokens_per_cam() + frozen_img_tokens + frozen_act_tokens + 1;
  }
  enc::BlockConfig block() const;
  void validate() const;
};

// host-side observation; frozen tensors may be empty (pretraining mode)
struct PolicyObservation {
  std::vector<core::Tensor64> rgb;  // per camera, (hw*hw) x 3
  core::Tensor64 proprio;           // 1 x proprio_dim
  core::Tensor64 frozen_img;        // frozen_img_tokens x frozen_embed, or empty
  core::Tensor64 frozen_act;        // frozen_act_tokens x frozen_embed, or empty
};

// graph-side observation: any nodes of the same shapes (inputs for constant
// tokens, or live subgraphs when the frozen encoders run inside the graph)
struct PolicyTokens {
  std::vector<core::Id> rgb;
  core::Id proprio = -1;
  core::Id frozen_img = -1;
  core::Id frozen_act = -1;
};

struct PolicyExample {
  PolicyObservation obs;
  core::Tensor64 a0;  // chunk x action_dim, already normalized
};

void add_policy_params(core::ParamStore64& ps, const PolicyConfig& cfg);

// wrap observation tensors as graph inputs (validates shapes)
PolicyTokens obs_tokens(core::Graph64& g, const PolicyConfig& cfg, const PolicyObservation& obs);

// noise estimate (chunk x action_dim) for schedule index k in [0, K)
core::Id policy_noise_graph(core::Graph64& g, const PolicyConfig& cfg, const PolicyTokens& toks,
                            core::Id noised, int k);

core::Tensor64 predict_noise(core::ParamStore64& ps, const PolicyConfig& cfg,
                             const PolicyObservation& obs, const core::Tensor64& noised, int k);

// mean over the batch of MSE(injected eps, predicted eps); draws come from
// streams "policy/k" and "policy/eps" indexed by (step, element)
core::Id policy_batch_loss_graph(core::Graph64& g, const PolicyConfig& cfg,
                                 const std::vector<PolicyExample>& batch,
                                 const NoiseSchedule& sched, const core::CounterRng& rng,
                                 uint64_t step);
double policy_batch_loss(core::ParamStore64& ps, const PolicyConfig& cfg,
                         const std::vector<PolicyExample>& batch, const NoiseSchedule& sched,
                         const core::CounterRng& rng, uint64_t step);

// one optimizer update; returns the pre-update loss
double policy_train_step(core::ParamStore64& ps, const PolicyConfig& cfg,
                         const std::vector<PolicyExample>& batch, const NoiseSchedule& sched,
                         core::Adam64& opt, double lr, const core::CounterRng& rng, uint64_t step);

// one reverse step, k in [1, K]; noise_draw is standard normal
core::Tensor64 denoise_step(core::ParamStore64& ps, const PolicyConfig& cfg,
                            const PolicyObservation& obs, const core::Tensor64& a_k, int k,
                            const NoiseSchedule& sched, const core::Tensor64& noise_draw);

// full reverse chain from a Gaussian chunk; streams "sample/<tag>/init" and
// "sample/<tag>/k<k>" make the draw reproducible
core::Tensor64 sample_chunk(core::ParamStore64& ps, const PolicyConfig& cfg,
                            const PolicyObservation& obs, const NoiseSchedule& sched,
                            const core::CounterRng& rng, const std::string& tag);

// per-dimension min-max map to [-1, 1]; degenerate dimensions map to 0
struct ActionNormalizer {
  core::Tensor64 lo, hi;  // 1 x action_dim each
  static ActionNormalizer fit(const std::vector<core::Tensor64>& chunks);
  core::Tensor64 normalize(const core::Tensor64& a) const;
  core::Tensor64 denormalize(const core::Tensor64& a) const;
};

// z-score statistics fitted on the pretraining set and reused verbatim for
// fine-tuning, stored in the checkpoint sidecar
struct ObsStats {
  core::Tensor64 proprio_mean, proprio_std;  // 1 x proprio_dim
  double rgb_mean = 0.0, rgb_std = 1.0;
  static ObsStats fit(const std::vector<PolicyObservation>& obs);
  PolicyObservation apply(const PolicyObservation& o) const;
};

}  // namespace clamp::policy
