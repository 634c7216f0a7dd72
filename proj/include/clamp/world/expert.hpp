// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "clamp/world/robot.hpp"
#include "clamp/world/scene.hpp"

namespace clamp::world {

// script phases; the episode progress integer is the phase index
enum : int {
  kPhaseApproach = 0,
  kPhaseGrasp,
  kPhaseLift,
  kPhaseTransport,
  kPhasePlace,
  kPhaseRetreat,
  kNumPhases
};

inline constexpr std::array<int, kNumPhases> kPhaseSteps{6, 3, 3, 8, 5, 5};

inline constexpr double kSuccessDist = 0.02;   // source-to-goal threshold
inline constexpr double kGraspDz = 0.035;      // gripper hovers this far above a held center
inline constexpr double kGraspRadius = 0.05;   // attach reach when the gripper closes
inline constexpr double kHoverPick = 0.10;     // transport height above grasp, pick tasks
inline constexpr double kHoverSlide = 0.004;   // near-surface hop for the drawer slide

// Kinematic world state. Actions are absolute joint targets applied exactly;
// the only "physics" is attachment: an object within reach when a gripper
// closes rides that gripper rigidly until it opens.
struct SimState {
  Scene scene;
  RobotState robot;
  std::array<int, 2> attached{-1, -1};  // object index per arm (left, right)
  std::array<Vec3, 2> grip_offset{};    // object center minus gripper position at attach
};

SimState make_sim(const Scene& scene);
void sim_step(SimState& s, const core::Tensor64& action);

// source object center within kSuccessDist of the task goal
bool task_success(const Scene& scene);

struct ExpertStep {
  RobotState state;       // before the action
  core::Tensor64 action;  // absolute joint target, kActionDim
  int phase = 0;
};

struct ExpertPlan {
  std::vector<ExpertStep> steps;
  bool feasible = true;  // false when a waypoint falls outside the joint box
  Scene final_scene;     // scene after replaying all actions
};

// Waypoint script approach -> grasp -> lift -> transport -> place -> retreat
// on the arm nearer the source; the other arm holds home. Deterministic per
// scene. Infeasible goals return an empty, flagged plan.
ExpertPlan scripted_expert(const Scene& scene);

}  // namespace clamp::world
