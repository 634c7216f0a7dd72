// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clamp/geom/camera.hpp"
#include "clamp/world/expert.hpp"
#include "clamp/world/sensors.hpp"

namespace clamp::world {

struct EpisodeStep {
  std::vector<core::Tensor64> depth;  // per camera, h x w
  std::vector<core::Tensor64> rgb;    // per camera, (h*w) x 3
  core::Tensor64 proprio;             // kActionDim
  core::Tensor64 action;              // kActionDim absolute joint target
  std::string text;                   // privileged scene description
  int progress = 0;                   // script phase index
};

struct Episode {
  std::string task;
  uint64_t seed = 0;
  bool success = false;
  int height = 0, width = 0;
  std::vector<EpisodeStep> steps;

  // consistent lengths/shapes across steps, progress non-decreasing
  void validate() const;
};

struct GenConfig {
  int res = 32;
  bool keep_failures = false;
  int max_attempt_factor = 20;  // generation attempts allowed per kept episode
};

// Scene + scripted expert rolled through the renderer and text emitter.
// Failures (infeasible scenes) come back as a one-step hold episode with
// success=false rather than a throw.
Episode make_episode(uint64_t seed, const std::string& task_family,
                     const std::vector<geom::CameraModel>& cams);

// Sequential seeds starting at seed0, shared across families; failed episodes
// are skipped unless cfg.keep_failures. Throws when the attempt budget runs
// out before `per_family` episodes are kept.
std::vector<Episode> gen_episodes(const std::vector<std::string>& families, int per_family,
                                  uint64_t seed0, const GenConfig& cfg);

// hash of everything generation depends on, stored in the dataset manifest
uint64_t gen_config_hash(const std::vector<std::string>& families, int per_family,
                         uint64_t seed0, const GenConfig& cfg);

}  // namespace clamp::world
