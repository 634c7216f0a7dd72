// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "clamp/geom/point_cloud.hpp"
#include "clamp/geom/pose.hpp"

namespace clamp::world {

using geom::Vec3;
// Vec3 is std::array, so its operators don't travel by ADL; pull them in
using geom::operator+;
using geom::operator-;
using geom::operator*;

enum class Prim { Sphere, Box };

// color palette indices; render colors live in kPalette
enum : int {
  kColRed = 0,
  kColGreen,
  kColBlue,
  kColYellow,
  kColBinLeft,
  kColBinRight,
  kColDrawer,
  kColTarget,
  kColTable,
  kColGripperL,
  kColGripperR,
  kPaletteSize
};

const std::array<double, 3>& palette(int color);

// Axis-aligned primitive. Spheres use half[0] as the radius; boxes use all
// three half extents. `cell` is the 2x3 grid slot for movable clutter, -1 for
// task fixtures (bins, drawer, target pad).
struct ObjectSpec {
  std::string name;
  Prim prim = Prim::Box;
  Vec3 half{0.02, 0.02, 0.02};
  Vec3 pos{0, 0, 0};
  int color = kColRed;
  int cell = -1;
  bool movable = false;

  double resting_half() const { return prim == Prim::Sphere ? half[0] : half[2]; }
};

struct TaskSpec {
  std::string family;       // "pick_place" | "drawer_slide"
  std::string description;  // closed-vocab sentence, e.g. "place the red cube into the left bin"
  std::string source;       // object the expert moves
  std::string target;       // object marking the goal location
  Vec3 goal{0, 0, 0};       // world position the source ends at on success
};

struct Scene {
  std::vector<ObjectSpec> objects;
  double table_x = 0.35, table_y = 0.45;  // tabletop half extents at z = 0
  TaskSpec task;
  geom::WorkspaceAABB workspace;

  int index_of(const std::string& name) const;  // -1 when absent
  const ObjectSpec& find(const std::string& name) const;
  // names unique, object centers strictly inside the workspace box
  void validate() const;
};

// 2x3 grid over the clutter half of the table (2 rows along x, 3 cols along y)
inline constexpr int kGridRows = 2;
inline constexpr int kGridCols = 3;
inline constexpr int kGridCells = kGridRows * kGridCols;
inline constexpr double kCellHalfX = 0.07;
inline constexpr double kCellHalfY = 0.07;
inline constexpr double kCellJitter = 0.04;  // < cell half extent minus max object radius

Vec3 grid_cell_center(int cell);

// Seeded scene: six movable objects on the jittered grid plus per-family
// fixtures; source/target assigned from the closed task-template list.
// Throws on an unknown family.
Scene gen_scene(uint64_t seed, const std::string& task_family);

// "task: <desc>. objects: <name> at (x,y,z); ... <name> at (x,y,z). progress: <n>"
// Positions are normalized to [0,1] by the workspace box, two decimals.
// Empty object list prints "objects: none".
std::string make_text(const Scene& scene, int progress);

}  // namespace clamp::world
