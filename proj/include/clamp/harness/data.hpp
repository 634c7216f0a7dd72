// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "clamp/enc/encoders.hpp"
#include "clamp/harness/config.hpp"
#include "clamp/policy/policy.hpp"
#include "clamp/world/dataset.hpp"

namespace clamp::harness {

struct LoadedDataset {
  world::DatasetManifest manifest;
  std::vector<world::Episode> episodes;

  int res() const { return episodes.empty() ? 0 : episodes[0].width; }
  int64_t total_steps() const;
};

LoadedDataset load_dataset(const std::string& dir);

// one training example: a time step of an episode
struct ExampleRef {
  int episode = 0;
  int step = 0;
  bool operator==(const ExampleRef& o) const { return episode == o.episode && step == o.step; }
};

std::vector<ExampleRef> all_examples(const LoadedDataset& ds);

// `batch` distinct refs drawn from stream "batch" of rng; deterministic in
// (rng seed, step)
std::vector<ExampleRef> sample_batch(const std::vector<ExampleRef>& pool, int batch,
                                     const core::CounterRng& rng, uint64_t step);

// ---- contrastive triplet construction ----

// merge the stored RGB-D captures into a workspace point cloud and re-render
// the five virtual views (three when wrist views are disabled)
geom::MultiViewObservation build_observation(const RunConfig& cfg, const world::Episode& ep,
                                             int t);
// same pipeline from live captures (depth per external camera at
// capture_res, flat proprio joint vector for the wrist poses)
geom::MultiViewObservation observation_from_frames(const RunConfig& cfg,
                                                   const std::vector<core::Tensor64>& depths,
                                                   const core::Tensor64& proprio, int capture_res);
// the `history` actions strictly before t, zero-padded at episode start
enc::ActionHistory build_history(const RunConfig& cfg, const world::Episode& ep, int t);
// history from an executed-action list (suffix of `executed`, zero-padded)
enc::ActionHistory history_from_actions(const RunConfig& cfg,
                                        const std::vector<core::Tensor64>& executed);
// stored step text, tokenized to the fixed length (truncation is an error)
std::vector<int> build_text_ids(const RunConfig& cfg, const world::Episode& ep, int t);

struct TripletBatch {
  std::vector<geom::MultiViewObservation> obs;
  std::vector<enc::ActionHistory> hist;
  std::vector<std::vector<int>> text;
  std::vector<ExampleRef> refs;
};
TripletBatch build_triplets(const RunConfig& cfg, const LoadedDataset& ds,
                            const std::vector<ExampleRef>& refs);

// ---- policy example construction ----

policy::ActionNormalizer fit_normalizer(const LoadedDataset& ds);
policy::ObsStats fit_obs_stats(const LoadedDataset& ds);

// observation at t plus the normalized chunk of actions starting at t (the
// final action repeats past the episode end); frozen token slots stay empty
policy::PolicyExample build_policy_example(const RunConfig& cfg, const world::Episode& ep, int t,
                                           const policy::ActionNormalizer& an,
                                           const policy::ObsStats& os);

// frozen multimodal tokens for fine-tuning: the pre-pool token matrices of
// the (frozen) image and action encoders
struct FrozenTokens {
  core::Tensor64 img;  // image_tokens x embed
  core::Tensor64 act;  // history x embed
};
FrozenTokens frozen_tokens(core::ParamStore64& enc_ps, const RunConfig& cfg,
                           const world::Episode& ep, int t);
FrozenTokens frozen_tokens_from(core::ParamStore64& enc_ps, const RunConfig& cfg,
                                const geom::MultiViewObservation& obs,
                                const enc::ActionHistory& hist);

// ---- validation selection ----

struct EvalSelection {
  std::vector<ExampleRef> items;
  int strict_count = 0;  // prefix satisfying the cell-novelty rule
};

// deterministic: scan episodes in order, keep steps whose 1-based index is a
// multiple of 10 and whose first listed object occupies a workspace grid cell
// (3x3 over x,y) not seen before for that task
EvalSelection select_validation(const LoadedDataset& ds);
// pad with further multiple-of-10 steps in scan order (cell rule relaxed)
// until `target` examples; throws if the dataset cannot supply them
void extend_selection(const LoadedDataset& ds, EvalSelection& sel, int target);

// 3x3 cell of the first object named in the step text, from its normalized
// coordinates; -1 when the text lists no objects
int first_object_cell(const world::Episode& ep, int t);

}  // namespace clamp::harness
