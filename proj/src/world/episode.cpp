// SPDX-License-Identifier: Apache-2.0
#include "clamp/world/episode.hpp"

#include <string>

#include "clamp/core/rng.hpp"

namespace clamp::world {

void Episode::validate() const {
  if (steps.empty()) core::fail("episode", "no steps");
  size_t cams = steps[0].depth.size();
  int prev = -1;
  for (const auto& st : steps) {
    if (st.depth.size() != cams || st.rgb.size() != cams)
      core::fail("episode", "camera count varies across steps");
    for (const auto& d : st.depth)
      if (d.shape != std::vector<int>{height, width})
        core::fail("episode", "depth shape mismatch");
    for (const auto& r : st.rgb)
      if (r.shape != std::vector<int>{height * width, 3})
        core::fail("episode", "rgb shape mismatch");
    if (st.proprio.numel() != kActionDim || st.action.numel() != kActionDim)
      core::fail("episode", "proprio/action dimension mismatch");
    if (st.progress < prev) core::fail("episode", "progress decreased");
    prev = st.progress;
  }
}

Episode make_episode(uint64_t seed, const std::string& task_family,
                     const std::vector<geom::CameraModel>& cams) {
  if (cams.empty()) core::fail("make_episode", "no cameras");
  for (const auto& c : cams)
    if (c.height != cams[0].height || c.width != cams[0].width)
      core::fail("make_episode", "cameras must share one resolution");

  Episode ep;
  ep.task = task_family;
  ep.seed = seed;
  ep.height = cams[0].height;
  ep.width = cams[0].width;

  Scene scene = gen_scene(seed, task_family);
  ExpertPlan plan = scripted_expert(scene);
  SimState sim = make_sim(scene);

  auto record = [&](const core::Tensor64& action, int phase) {
    EpisodeStep st;
    std::vector<SensorFrame> frames = render_sensors(sim.scene, sim.robot, cams);
    for (auto& f : frames) {
      st.depth.push_back(std::move(f.depth));
      st.rgb.push_back(std::move(f.rgb));
    }
    st.proprio = sim.robot.joints();
    st.action = action;
    st.text = make_text(sim.scene, phase);
    st.progress = phase;
    ep.steps.push_back(std::move(st));
  };

  if (!plan.feasible) {
    // failure recorded as a one-step hold so it still serializes cleanly
    record(sim.robot.joints(), 0);
    ep.success = false;
    return ep;
  }
  for (const ExpertStep& st : plan.steps) {
    record(st.action, st.phase);
    sim_step(sim, st.action);
  }
  ep.success = task_success(sim.scene);
  ep.validate();
  return ep;
}

std::vector<Episode> gen_episodes(const std::vector<std::string>& families, int per_family,
                                  uint64_t seed0, const GenConfig& cfg) {
  if (families.empty() || per_family <= 0)
    core::fail("gen_episodes", "need at least one family and a positive episode count");
  std::vector<geom::CameraModel> cams = external_cameras(cfg.res);
  std::vector<Episode> out;
  uint64_t next = seed0;
  for (const std::string& fam : families) {
    int kept = 0, attempts = 0;
    int budget = per_family * cfg.max_attempt_factor;
    while (kept < per_family && attempts < budget) {
      Episode ep = make_episode(next++, fam, cams);
      ++attempts;
      if (ep.success || cfg.keep_failures) {
        out.push_back(std::move(ep));
        ++kept;
      }
    }
    if (kept < per_family)
      core::fail("gen_episodes", "attempt budget exhausted for family '" + fam + "'");
  }
  return out;
}

uint64_t gen_config_hash(const std::vector<std::string>& families, int per_family,
                         uint64_t seed0, const GenConfig& cfg) {
  std::string s = "v1";
  for (const auto& f : families) s += "|" + f;
  s += "|n=" + std::to_string(per_family);
  s += "|seed=" + std::to_string(seed0);
  s += "|res=" + std::to_string(cfg.res);
  s += "|keep=" + std::to_string(cfg.keep_failures ? 1 : 0);
  return core::fnv1a64(s);
}

}  // namespace clamp::world
