// SPDX-License-Identifier: Apache-2.0
#include "clamp/world/scene.hpp"

#include <cstdio>
#include <set>

#include "clamp/core/rng.hpp"

namespace clamp::world {

namespace {

constexpr std::array<std::array<double, 3>, kPaletteSize> kPalette{{
    {0.85, 0.10, 0.10},  // red
    {0.10, 0.75, 0.15},  // green
    {0.10, 0.20, 0.85},  // blue
    {0.90, 0.85, 0.10},  // yellow
    {0.20, 0.20, 0.35},  // left bin
    {0.35, 0.20, 0.20},  // right bin
    {0.55, 0.35, 0.15},  // drawer
    {0.10, 0.80, 0.80},  // target pad
    {0.60, 0.50, 0.40},  // table
    {0.25, 0.25, 0.25},  // left gripper
    {0.15, 0.15, 0.15},  // right gripper
}};

// grid rows sit on the clutter half of the table (negative x); the fixture
// lane (bins / drawer track) is at positive x
constexpr double kGridRowX[kGridRows] = {-0.23, -0.09};
constexpr double kGridColY[kGridCols] = {-0.14, 0.0, 0.14};

constexpr double kCubeHalf = 0.022;
constexpr double kBallRadius = 0.025;

constexpr double kLaneX = 0.15;
constexpr double kBinY = 0.30;
constexpr Vec3 kBinHalf{0.07, 0.07, 0.015};
constexpr Vec3 kDrawerHalf{0.055, 0.075, 0.03};
constexpr Vec3 kPadHalf{0.065, 0.09, 0.004};
constexpr double kPadCenterZ = 0.0045;
constexpr double kDrawerTargetY = 0.27;

struct PickVariant {
  const char* color_word;
  const char* shape_word;
  const char* side_word;
  int color;
  Prim prim;
};
constexpr PickVariant kPickVariants[4] = {
    {"red", "cube", "left", kColRed, Prim::Box},
    {"green", "ball", "right", kColGreen, Prim::Sphere},
    {"blue", "cube", "right", kColBlue, Prim::Box},
    {"yellow", "ball", "left", kColYellow, Prim::Sphere},
};

// the six movable clutter objects present in every scene (closed vocab)
struct GridItem {
  const char* name;
  int color;
  Prim prim;
};
constexpr GridItem kGridItems[kGridCells] = {
    {"red cube", kColRed, Prim::Box},       {"green ball", kColGreen, Prim::Sphere},
    {"blue cube", kColBlue, Prim::Box},     {"yellow ball", kColYellow, Prim::Sphere},
    {"red ball", kColRed, Prim::Sphere},    {"green cube", kColGreen, Prim::Box},
};

ObjectSpec grid_object(const GridItem& it, int cell, double jx, double jy) {
  ObjectSpec o;
  o.name = it.name;
  o.prim = it.prim;
  o.half = it.prim == Prim::Sphere ? Vec3{kBallRadius, kBallRadius, kBallRadius}
                                   : Vec3{kCubeHalf, kCubeHalf, kCubeHalf};
  Vec3 c = grid_cell_center(cell);
  o.pos = {c[0] + jx, c[1] + jy, o.resting_half()};
  o.color = it.color;
  o.cell = cell;
  o.movable = true;
  return o;
}

}  // namespace

const std::array<double, 3>& palette(int color) {
  if (color < 0 || color >= kPaletteSize) core::fail("palette", "color id out of range");
  return kPalette[static_cast<size_t>(color)];
}

Vec3 grid_cell_center(int cell) {
  if (cell < 0 || cell >= kGridCells) core::fail("grid_cell_center", "cell out of range");
  return {kGridRowX[cell / kGridCols], kGridColY[cell % kGridCols], 0.0};
}

int Scene::index_of(const std::string& name) const {
  for (size_t i = 0; i < objects.size(); ++i)
    if (objects[i].name == name) return static_cast<int>(i);
  return -1;
}

const ObjectSpec& Scene::find(const std::string& name) const {
  int i = index_of(name);
  if (i < 0) core::fail("scene", "no object named '" + name + "'");
  return objects[static_cast<size_t>(i)];
}

void Scene::validate() const {
  workspace.validate();
  std::set<std::string> names;
  for (const auto& o : objects) {
    if (!names.insert(o.name).second) core::fail("scene", "duplicate object name '" + o.name + "'");
    if (!workspace.contains(o.pos))
      core::fail("scene", "object '" + o.name + "' center outside the workspace box");
  }
  if (!task.family.empty()) {
    find(task.source);
    find(task.target);
  }
}

Scene gen_scene(uint64_t seed, const std::string& task_family) {
  if (task_family != "pick_place" && task_family != "drawer_slide")
    core::fail("gen_scene", "unknown task family '" + task_family + "'");

  core::CounterRng rng(seed);
  Scene s;

  core::RngStream cells(rng, "scene/cells");
  auto perm = cells.sample_without_replacement(kGridCells, kGridCells);
  core::RngStream jitter(rng, "scene/jitter");
  for (int i = 0; i < kGridCells; ++i) {
    double jx = jitter.uniform(-kCellJitter, kCellJitter);
    double jy = jitter.uniform(-kCellJitter, kCellJitter);
    s.objects.push_back(grid_object(kGridItems[i], static_cast<int>(perm[static_cast<size_t>(i)]),
                                    jx, jy));
  }

  s.task.family = task_family;
  if (task_family == "pick_place") {
    core::RngStream pick(rng, "scene/variant");
    const PickVariant& v = kPickVariants[pick.uniform_int(0, 3)];
    ObjectSpec binl{"left bin", Prim::Box, kBinHalf, {kLaneX, -kBinY, kBinHalf[2]}, kColBinLeft};
    ObjectSpec binr{"right bin", Prim::Box, kBinHalf, {kLaneX, kBinY, kBinHalf[2]}, kColBinRight};
    s.objects.push_back(binl);
    s.objects.push_back(binr);

    s.task.description = std::string("place the ") + v.color_word + " " + v.shape_word +
                         " into the " + v.side_word + " bin";
    s.task.source = std::string(v.color_word) + " " + (v.prim == Prim::Sphere ? "ball" : "cube");
    s.task.target = std::string(v.side_word) + " bin";
    const ObjectSpec& src = s.find(s.task.source);
    const ObjectSpec& bin = s.find(s.task.target);
    double bin_top = bin.pos[2] + bin.half[2];
    s.task.goal = {bin.pos[0], bin.pos[1], bin_top + src.resting_half()};
  } else {
    core::RngStream dr(rng, "scene/drawer");
    double side = dr.uniform_int(0, 1) == 0 ? -1.0 : 1.0;  // target side
    double start_y = -side * dr.uniform(0.12, 0.30);
    ObjectSpec drawer{"drawer", Prim::Box, kDrawerHalf, {kLaneX, start_y, kDrawerHalf[2]},
                      kColDrawer};
    drawer.movable = true;
    ObjectSpec pad{"target", Prim::Box, kPadHalf, {kLaneX, side * kDrawerTargetY, kPadCenterZ},
                   kColTarget};
    s.objects.push_back(drawer);
    s.objects.push_back(pad);

    s.task.description = "slide the drawer to the target";
    s.task.source = "drawer";
    s.task.target = "target";
    // the drawer stays on the table; the pad is a flush marker, not a support
    s.task.goal = {pad.pos[0], pad.pos[1], kDrawerHalf[2]};
  }

  s.validate();
  return s;
}

std::string make_text(const Scene& scene, int progress) {
  if (progress < 0) core::fail("make_text", "progress must be non-negative");
  std::string out = "task: " + scene.task.description + ". objects: ";
  if (scene.objects.empty()) {
    out += "none";
  } else {
    const Vec3& lo = scene.workspace.min;
    const Vec3& hi = scene.workspace.max;
    for (size_t i = 0; i < scene.objects.size(); ++i) {
      const ObjectSpec& o = scene.objects[i];
      double n[3];
      for (int a = 0; a < 3; ++a) n[a] = (o.pos[a] - lo[a]) / (hi[a] - lo[a]);
      char buf[64];
      std::snprintf(buf, sizeof(buf), "(%.2f,%.2f,%.2f)", n[0], n[1], n[2]);
      if (i) out += "; ";
      out += o.name + " at " + buf;
    }
  }
  out += ". progress: " + std::to_string(progress);
  return out;
}

}  // namespace clamp::world
