// SPDX-License-Identifier: Apache-2.0
#include "clamp/world/robot.hpp"

#include <cmath>

#include "clamp/core/rng.hpp"

namespace clamp::world {

namespace {

void pack(const ArmState& a, double* q) {
  q[0] = a.pos[0];
  q[1] = a.pos[1];
  q[2] = a.pos[2];
  q[3] = a.yaw;
  q[4] = a.pitch;
  q[5] = a.roll;
  q[6] = a.grip;
}

ArmState unpack(const double* q) {
  ArmState a;
  a.pos = {q[0], q[1], q[2]};
  a.yaw = q[3];
  a.pitch = q[4];
  a.roll = q[5];
  a.grip = q[6];
  return a;
}

void check_arm(const ArmState& a, const char* which) {
  for (int i = 0; i < 3; ++i)
    if (!(kJointPosMin[i] <= a.pos[i] && a.pos[i] <= kJointPosMax[i]))
      core::fail("robot", std::string(which) + " arm position outside the joint box");
  for (double ang : {a.yaw, a.pitch, a.roll})
    if (!(std::fabs(ang) <= core::kPi))
      core::fail("robot", std::string(which) + " arm angle outside [-pi, pi]");
  if (!(0.0 <= a.grip && a.grip <= 1.0))
    core::fail("robot", std::string(which) + " grip outside [0, 1]");
}

}  // namespace

core::Tensor64 RobotState::joints() const {
  core::Tensor64 q({kActionDim});
  pack(left, q.data.data());
  pack(right, q.data.data() + kArmDof);
  return q;
}

RobotState RobotState::from_joints(const core::Tensor64& q) {
  if (q.numel() != kActionDim)
    core::fail("robot", "joint vector must have " + std::to_string(kActionDim) + " entries, got " +
                            std::to_string(q.numel()));
  RobotState r;
  r.left = unpack(q.data.data());
  r.right = unpack(q.data.data() + kArmDof);
  return r;
}

void RobotState::validate() const {
  check_arm(left, "left");
  check_arm(right, "right");
}

RobotState home_robot() {
  RobotState r;
  r.left.pos = {0.0, -0.38, 0.25};
  r.right.pos = {0.0, 0.38, 0.25};
  return r;
}

}  // namespace clamp::world
