// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "clamp/core/tensor.hpp"
#include "clamp/geom/camera.hpp"

namespace clamp::geom {

// Global-frame point set. Invalid points are exactly (0,0,0); the workspace
// box excludes the origin so padding never renders or enters patch means.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<uint8_t> valid;

  size_t size() const { return points.size(); }
  void push(const Vec3& p, bool v = true) {
    points.push_back(p);
    valid.push_back(v ? 1 : 0);
  }
};

struct WorkspaceAABB {
  Vec3 min{-0.35, -0.45, 0.003};
  Vec3 max{0.35, 0.45, 0.60};

  void validate() const {
    for (int a = 0; a < 3; ++a)
      if (!(min[a] < max[a])) core::fail("workspace", "min must be < max on every axis");
    bool origin_inside = true;
    for (int a = 0; a < 3; ++a) origin_inside = origin_inside && min[a] < 0.0 && 0.0 < max[a];
    if (origin_inside) core::fail("workspace", "box must exclude the world origin");
  }
  bool contains(const Vec3& p) const {
    for (int a = 0; a < 3; ++a)
      if (!(min[a] < p[a] && p[a] < max[a])) return false;
    return true;
  }
};

// depth: height x width, zeros mark empty pixels
PointCloud unproject(const core::Tensor64& depth, const CameraModel& cam);
PointCloud unproject_serial(const core::Tensor64& depth, const CameraModel& cam);

PointCloud merge(const std::vector<PointCloud>& clouds);
PointCloud crop_aabb(const PointCloud& cloud, const WorkspaceAABB& box);

PointCloud voxel_downsample(const PointCloud& cloud, double voxel);
PointCloud voxel_downsample_serial(const PointCloud& cloud, double voxel);

PointCloud fix_count(const PointCloud& cloud, int n, uint64_t seed);

// composition gripper_pose ∘ offset; rejects non-rigid inputs
Pose wrist_camera_pose(const Pose& gripper_pose, const Pose& offset);

}  // namespace clamp::geom
