// SPDX-License-Identifier: Apache-2.0
#include "clamp/harness/eval.hpp"

#include <algorithm>

#include "clamp/policy/schedule.hpp"
#include "clamp/world/expert.hpp"
#include "clamp/world/sensors.hpp"

namespace clamp::harness {

using core::Tensor64;

double RetrievalReport::min_recall5() const {
  double m = 1.0;
  for (double r : recall5) m = std::min(m, r);
  return m;
}

namespace {

double recall_rows(const Tensor64& P, int k, bool transpose) {
  int n = P.shape[0];
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    double self = P.at(i, i);
    int better = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double v = transpose ? P.at(j, i) : P.at(i, j);
      if (v > self) ++better;
    }
    if (1 + better <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace

std::array<double, 6> recall_at_k(const Tensor64& X_img, const Tensor64& Y_txt,
                                  const Tensor64& Z_act, const contrastive::TempBias& tb,
                                  bool literal_sign, int k) {
  Tensor64 p_it = contrastive::matching_probabilities(X_img, Y_txt, tb, literal_sign);
  Tensor64 p_ia = contrastive::matching_probabilities(X_img, Z_act, tb, literal_sign);
  Tensor64 p_ta = contrastive::matching_probabilities(Y_txt, Z_act, tb, literal_sign);
  // order mirrors kRetrievalDirections
  return {recall_rows(p_ia, k, false), recall_rows(p_it, k, false), recall_rows(p_ta, k, true),
          recall_rows(p_ia, k, true),  recall_rows(p_it, k, true),  recall_rows(p_ta, k, false)};
}

RetrievalReport eval_retrieval(core::ParamStore64& enc_ps, const RunConfig& cfg,
                               const LoadedDataset& ds, const EvalSelection& sel) {
  if (sel.items.empty()) core::fail("retrieval", "empty selection");
  enc::EncoderConfig ec = cfg.encoder_config();
  int n = static_cast<int>(sel.items.size());
  Tensor64 X({n, cfg.embed}), Y({n, cfg.embed}), Z({n, cfg.embed});
  for (int i = 0; i < n; ++i) {
    const ExampleRef& r = sel.items[static_cast<size_t>(i)];
    const world::Episode& ep = ds.episodes.at(static_cast<size_t>(r.episode));
    enc::EmbeddingTriplet trip =
        enc::encode_triplet(enc_ps, ec, build_observation(cfg, ep, r.step),
                            build_history(cfg, ep, r.step), build_text_ids(cfg, ep, r.step));
    for (int d = 0; d < cfg.embed; ++d) {
      X.at(i, d) = trip.x_img.at(0, d);
      Y.at(i, d) = trip.y_txt.at(0, d);
      Z.at(i, d) = trip.z_act.at(0, d);
    }
  }
  contrastive::TempBias tb = contrastive::read_temp_bias(enc_ps, "tb");
  RetrievalReport rep;
  rep.n = n;
  rep.p_img_txt = contrastive::matching_probabilities(X, Y, tb, cfg.literal_sign);
  rep.p_img_act = contrastive::matching_probabilities(X, Z, tb, cfg.literal_sign);
  rep.p_txt_act = contrastive::matching_probabilities(Y, Z, tb, cfg.literal_sign);
  rep.recall1 = recall_at_k(X, Y, Z, tb, cfg.literal_sign, 1);
  rep.recall5 = recall_at_k(X, Y, Z, tb, cfg.literal_sign, 5);
  return rep;
}

PolicyEvalResult eval_policy(core::ParamStore64& pol_ps, const RunConfig& cfg,
                             const std::string& family, int trials, uint64_t seed0,
                             const policy::ActionNormalizer& an, const policy::ObsStats& os,
                             core::ParamStore64* enc_ps, int max_control_steps) {
  if (trials < 1) core::fail("eval_policy", "trials must be positive");
  policy::PolicyConfig pcfg = cfg.policy_config();
  policy::NoiseSchedule sched = policy::make_schedule(cfg.diffusion_steps);
  std::vector<geom::CameraModel> rig = world::external_cameras(cfg.res);
  core::CounterRng rng(seed0);

  PolicyEvalResult res;
  res.trials = trials;
  for (int trial = 0; trial < trials; ++trial) {
    world::Scene scene = world::gen_scene(seed0 + static_cast<uint64_t>(trial), family);
    world::SimState sim = world::make_sim(scene);
    std::vector<Tensor64> executed;
    bool ok = false;
    int done = 0;
    while (done < max_control_steps && !ok) {
      std::vector<world::SensorFrame> frames = world::render_sensors(sim.scene, sim.robot, rig);
      policy::PolicyObservation obs;
      for (const auto& f : frames) obs.rgb.push_back(f.rgb);
      Tensor64 joints = sim.robot.joints();
      obs.proprio = Tensor64({1, static_cast<int>(joints.numel())});
      for (int j = 0; j < obs.proprio.shape[1]; ++j) obs.proprio.at(0, j) = joints[j];
      obs = os.apply(obs);
      if (enc_ps) {
        std::vector<Tensor64> depths;
        for (const auto& f : frames) depths.push_back(f.depth);
        geom::MultiViewObservation mvo =
            observation_from_frames(cfg, depths, joints, cfg.res);
        enc::ActionHistory hist = history_from_actions(cfg, executed);
        FrozenTokens ft = frozen_tokens_from(*enc_ps, cfg, mvo, hist);
        obs.frozen_img = std::move(ft.img);
        obs.frozen_act = std::move(ft.act);
      }
      std::string tag = "t" + std::to_string(trial) + "/c" + std::to_string(done);
      Tensor64 chunk = policy::sample_chunk(pol_ps, pcfg, obs, sched, rng, tag);
      Tensor64 acts = an.denormalize(chunk);
      for (int i = 0; i < acts.shape[0] && done < max_control_steps; ++i) {
        Tensor64 a({acts.shape[1]});
        for (int j = 0; j < acts.shape[1]; ++j) a[j] = acts.at(i, j);
        world::sim_step(sim, a);
        executed.push_back(std::move(a));
        ++done;
        if (world::task_success(sim.scene)) {
          ok = true;
          break;
        }
      }
    }
    res.success.push_back(ok ? 1 : 0);
    if (ok) ++res.successes;
  }
  return res;
}

PolicyEvalResult eval_oracle(const std::string& family, int trials, uint64_t seed0) {
  if (trials < 1) core::fail("eval_policy", "trials must be positive");
  PolicyEvalResult res;
  res.trials = trials;
  for (int trial = 0; trial < trials; ++trial) {
    world::Scene scene = world::gen_scene(seed0 + static_cast<uint64_t>(trial), family);
    world::ExpertPlan plan = world::scripted_expert(scene);
    world::SimState sim = world::make_sim(scene);
    for (const auto& st : plan.steps) world::sim_step(sim, st.action);
    bool ok = plan.feasible && world::task_success(sim.scene);
    res.success.push_back(ok ? 1 : 0);
    if (ok) ++res.successes;
  }
  return res;
}

}  // namespace clamp::harness
