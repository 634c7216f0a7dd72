// SPDX-License-Identifier: Apache-2.0
#include "clamp/world/expert.hpp"

#include <cmath>

namespace clamp::world {

namespace {

Vec3 lerp3(const Vec3& a, const Vec3& b, double t) {
  return {std::lerp(a[0], b[0], t), std::lerp(a[1], b[1], t), std::lerp(a[2], b[2], t)};
}

double dist(const Vec3& a, const Vec3& b) { return geom::norm(a - b); }

bool in_joint_box(const Vec3& p) {
  for (int i = 0; i < 3; ++i)
    if (!(kJointPosMin[i] <= p[i] && p[i] <= kJointPosMax[i])) return false;
  return true;
}

// grasp point a gripper visits to hold an object centered at c
Vec3 grasp_point(const Vec3& c) { return {c[0], c[1], c[2] + kGraspDz}; }

}  // namespace

SimState make_sim(const Scene& scene) {
  SimState s;
  s.scene = scene;
  s.robot = home_robot();
  return s;
}

void sim_step(SimState& s, const core::Tensor64& action) {
  RobotState target = RobotState::from_joints(action);
  ArmState* arms[2] = {&s.robot.left, &s.robot.right};
  const ArmState* next[2] = {&target.left, &target.right};
  for (int a = 0; a < 2; ++a) {
    double prev_grip = arms[a]->grip;
    *arms[a] = *next[a];
    int& held = s.attached[static_cast<size_t>(a)];
    if (held >= 0) {
      if (arms[a]->grip < 0.5) {
        held = -1;  // release; the object stays where it was carried to
      } else {
        s.scene.objects[static_cast<size_t>(held)].pos =
            arms[a]->pos + s.grip_offset[static_cast<size_t>(a)];
      }
    } else if (prev_grip < 0.5 && arms[a]->grip >= 0.5) {
      // closing event: latch the nearest movable object within reach
      Vec3 reach{arms[a]->pos[0], arms[a]->pos[1], arms[a]->pos[2] - kGraspDz};
      int best = -1;
      double best_d = kGraspRadius;
      for (size_t i = 0; i < s.scene.objects.size(); ++i) {
        if (!s.scene.objects[i].movable) continue;
        double d = dist(s.scene.objects[i].pos, reach);
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(i);
        }
      }
      if (best >= 0) {
        held = best;
        s.grip_offset[static_cast<size_t>(a)] =
            s.scene.objects[static_cast<size_t>(best)].pos - arms[a]->pos;
      }
    }
  }
}

bool task_success(const Scene& scene) {
  return dist(scene.find(scene.task.source).pos, scene.task.goal) < kSuccessDist;
}

ExpertPlan scripted_expert(const Scene& scene) {
  const ObjectSpec& src = scene.find(scene.task.source);
  const bool slide = scene.task.family == "drawer_slide";
  const double hover = slide ? kHoverSlide : kHoverPick;

  RobotState home = home_robot();
  const int arm = src.pos[1] < 0 ? 0 : 1;  // act with the arm on the source's side
  const Vec3 rest = arm == 0 ? home.left.pos : home.right.pos;

  Vec3 g = grasp_point(src.pos);
  Vec3 above_src = g + Vec3{0, 0, hover};
  Vec3 p = grasp_point(scene.task.goal);
  Vec3 above_goal = p + Vec3{0, 0, hover};

  ExpertPlan plan;
  plan.final_scene = scene;
  for (const Vec3& wp : {rest, above_src, g, p, above_goal})
    if (!in_joint_box(wp)) {
      plan.feasible = false;
      return plan;
    }

  // one (position, grip, phase) knot per step; lerp hits endpoints exactly
  struct Knot {
    Vec3 pos;
    double grip;
    int phase;
  };
  std::vector<Knot> knots;
  auto seg = [&](const Vec3& from, const Vec3& to, int n, double grip, int phase) {
    for (int i = 1; i <= n; ++i)
      knots.push_back({lerp3(from, to, static_cast<double>(i) / n), grip, phase});
  };
  seg(rest, above_src, 3, 0.0, kPhaseApproach);
  seg(above_src, g, 3, 0.0, kPhaseApproach);
  for (int i = 0; i < kPhaseSteps[kPhaseGrasp]; ++i) knots.push_back({g, 1.0, kPhaseGrasp});
  seg(g, above_src, kPhaseSteps[kPhaseLift], 1.0, kPhaseLift);
  seg(above_src, above_goal, kPhaseSteps[kPhaseTransport], 1.0, kPhaseTransport);
  seg(above_goal, p, 3, 1.0, kPhasePlace);
  for (int i = 0; i < 2; ++i) knots.push_back({p, 0.0, kPhasePlace});
  seg(p, above_goal, 2, 0.0, kPhaseRetreat);
  seg(above_goal, rest, 3, 0.0, kPhaseRetreat);

  SimState sim = make_sim(scene);
  RobotState target = home;
  for (const Knot& k : knots) {
    ArmState& act = arm == 0 ? target.left : target.right;
    act.pos = k.pos;
    act.grip = k.grip;
    ExpertStep step;
    step.state = sim.robot;
    step.action = target.joints();
    step.phase = k.phase;
    sim_step(sim, step.action);
    plan.steps.push_back(std::move(step));
  }
  plan.final_scene = sim.scene;
  return plan;
}

}  // namespace clamp::world
