// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "clamp/core/tensor.hpp"
#include "clamp/geom/pose.hpp"

namespace clamp::world {

using geom::Pose;
using geom::Vec3;

// One toy arm: the joint vector IS the gripper placement (x, y, z, yaw,
// pitch, roll, grip), so forward kinematics is exact and contact-free.
struct ArmState {
  Vec3 pos{0, 0, 0.25};
  double yaw = 0, pitch = 0, roll = 0;
  double grip = 0;  // 0 open .. 1 closed

  Pose pose() const { return geom::pose_rpy(pos, roll, pitch, yaw); }
};

inline constexpr int kArmDof = 7;
inline constexpr int kActionDim = 2 * kArmDof;

// joint position box; z keeps the gripper above the tabletop
inline constexpr Vec3 kJointPosMin{-0.34, -0.44, 0.004};
inline constexpr Vec3 kJointPosMax{0.34, 0.44, 0.59};

struct RobotState {
  ArmState left, right;

  // [left x,y,z,yaw,pitch,roll,grip, right x,y,z,yaw,pitch,roll,grip]
  core::Tensor64 joints() const;
  static RobotState from_joints(const core::Tensor64& q);

  // joint limits: position box, |angles| <= pi, grip in [0,1]
  void validate() const;
};

RobotState home_robot();

}  // namespace clamp::world
