// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "clamp/contrastive/siglip.hpp"
#include "clamp/harness/data.hpp"

namespace clamp::harness {

// six ordered retrieval directions over the three modalities
inline constexpr std::array<const char*, 6> kRetrievalDirections = {
    "img->act", "img->txt", "act->txt", "act->img", "txt->img", "txt->act"};

struct RetrievalReport {
  int n = 0;
  std::array<double, 6> recall1{};
  std::array<double, 6> recall5{};
  // matching-probability fixtures (rows: query modality of the pair name)
  core::Tensor64 p_img_txt, p_img_act, p_txt_act;

  double min_recall5() const;
};

// rank candidates by matching probability (ties resolved optimistically:
// rank = 1 + count of strictly greater scores); rows of X/Y/Z are matched
// embeddings of the same examples
std::array<double, 6> recall_at_k(const core::Tensor64& X_img, const core::Tensor64& Y_txt,
                                  const core::Tensor64& Z_act, const contrastive::TempBias& tb,
                                  bool literal_sign, int k);

// embed every selected example with the loaded encoders and score all six
// directions at K in {1, 5}
RetrievalReport eval_retrieval(core::ParamStore64& enc_ps, const RunConfig& cfg,
                               const LoadedDataset& ds, const EvalSelection& sel);

struct PolicyEvalResult {
  int trials = 0;
  int successes = 0;
  std::vector<uint8_t> success;  // per trial

  double mean() const { return trials == 0 ? 0.0 : static_cast<double>(successes) / trials; }
};

// roll sampled action chunks through the kinematic world on freshly seeded
// scenes; success = task object within threshold of its goal. When enc_ps is
// non-null the frozen-token slots are fed from live renders (fine-tuned
// policies); otherwise they stay empty.
PolicyEvalResult eval_policy(core::ParamStore64& pol_ps, const RunConfig& cfg,
                             const std::string& family, int trials, uint64_t seed0,
                             const policy::ActionNormalizer& an, const policy::ObsStats& os,
                             core::ParamStore64* enc_ps = nullptr,
                             int max_control_steps = 48);

// replay the scripted expert through the same rollout plumbing
PolicyEvalResult eval_oracle(const std::string& family, int trials, uint64_t seed0);

}  // namespace clamp::harness
