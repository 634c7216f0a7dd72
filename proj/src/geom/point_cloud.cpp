// SPDX-License-Identifier: Apache-2.0
#include "clamp/geom/point_cloud.hpp"

#include <algorithm>
#include <cmath>

#include "clamp/core/parallel.hpp"
#include "clamp/core/rng.hpp"

namespace clamp::geom {

namespace {

inline Vec3 pixel_to_world(const CameraModel& cam, int u, int v, double d) {
  Vec3 pc = {(u - cam.cx) / cam.fx * d, (v - cam.cy) / cam.fy * d, d};
  return cam.cam_to_world.apply(pc);
}

}  // namespace

PointCloud unproject_serial(const core::Tensor64& depth, const CameraModel& cam) {
  cam.validate();
  if (depth.rank() != 2 || depth.shape[0] != cam.height || depth.shape[1] != cam.width)
    core::fail("unproject", "depth shape " + core::shape_str(depth.shape) +
                                " does not match camera " + std::to_string(cam.width) + "x" +
                                std::to_string(cam.height));
  PointCloud out;
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u) {
      double d = depth.at(v, u);
      if (d < 0) core::fail("unproject", "negative depth at pixel");
      if (d > 0) out.push(pixel_to_world(cam, u, v, d));
    }
  return out;
}

PointCloud unproject(const core::Tensor64& depth, const CameraModel& cam) {
  cam.validate();
  if (depth.rank() != 2 || depth.shape[0] != cam.height || depth.shape[1] != cam.width)
    core::fail("unproject", "depth shape " + core::shape_str(depth.shape) +
                                " does not match camera " + std::to_string(cam.width) + "x" +
                                std::to_string(cam.height));
  const int64_t n = depth.numel();
  std::vector<Vec3> pts(static_cast<size_t>(n));
  std::vector<uint8_t> keep(static_cast<size_t>(n), 0);
  bool bad = false;
  core::parallel_for(n, [&](int64_t i) {
    double d = depth.data[static_cast<size_t>(i)];
    if (d < 0) {
      bad = true;
      return;
    }
    if (d > 0) {
      int v = static_cast<int>(i / cam.width);
      int u = static_cast<int>(i % cam.width);
      pts[static_cast<size_t>(i)] = pixel_to_world(cam, u, v, d);
      keep[static_cast<size_t>(i)] = 1;
    }
  });
  if (bad) core::fail("unproject", "negative depth at pixel");
  PointCloud out;
  for (int64_t i = 0; i < n; ++i)  // pixel-order compaction keeps output deterministic
    if (keep[static_cast<size_t>(i)]) out.push(pts[static_cast<size_t>(i)]);
  return out;
}

PointCloud merge(const std::vector<PointCloud>& clouds) {
  PointCloud out;
  size_t total = 0;
  for (auto& c : clouds) total += c.size();
  out.points.reserve(total);
  out.valid.reserve(total);
  for (auto& c : clouds) {
    out.points.insert(out.points.end(), c.points.begin(), c.points.end());
    out.valid.insert(out.valid.end(), c.valid.begin(), c.valid.end());
  }
  return out;
}

PointCloud crop_aabb(const PointCloud& cloud, const WorkspaceAABB& box) {
  box.validate();
  PointCloud out;
  for (size_t i = 0; i < cloud.size(); ++i)
    if (cloud.valid[i] && box.contains(cloud.points[i])) out.push(cloud.points[i]);
  return out;
}

namespace {

struct VoxelRef {
  int64_t kx, ky, kz;
  int64_t idx;
  bool operator<(const VoxelRef& o) const {
    if (kx != o.kx) return kx < o.kx;
    if (ky != o.ky) return ky < o.ky;
    if (kz != o.kz) return kz < o.kz;
    return idx < o.idx;
  }
  bool same_cell(const VoxelRef& o) const { return kx == o.kx && ky == o.ky && kz == o.kz; }
};

PointCloud voxel_downsample_impl(const PointCloud& cloud, double voxel, bool parallel) {
  if (voxel <= 0) core::fail("voxel_downsample", "voxel size must be positive");
  std::vector<VoxelRef> refs;
  std::vector<int64_t> valid_idx;
  for (size_t i = 0; i < cloud.size(); ++i)
    if (cloud.valid[i]) valid_idx.push_back(static_cast<int64_t>(i));
  refs.resize(valid_idx.size());
  auto key_of = [&](int64_t slot) {
    int64_t i = valid_idx[static_cast<size_t>(slot)];
    const Vec3& p = cloud.points[static_cast<size_t>(i)];
    refs[static_cast<size_t>(slot)] =
        VoxelRef{static_cast<int64_t>(std::floor(p[0] / voxel)),
                 static_cast<int64_t>(std::floor(p[1] / voxel)),
                 static_cast<int64_t>(std::floor(p[2] / voxel)), i};
  };
  if (parallel)
    core::parallel_for(static_cast<int64_t>(valid_idx.size()), key_of);
  else
    for (int64_t s = 0; s < static_cast<int64_t>(valid_idx.size()); ++s) key_of(s);

  // sort by (cell, original index): centroid summation order is then fixed,
  // which keeps the parallel and serial paths bit-identical
  std::sort(refs.begin(), refs.end());

  PointCloud out;
  size_t i = 0;
  while (i < refs.size()) {
    size_t j = i;
    Vec3 acc{0, 0, 0};
    while (j < refs.size() && refs[j].same_cell(refs[i])) {
      const Vec3& p = cloud.points[static_cast<size_t>(refs[j].idx)];
      acc = acc + p;
      ++j;
    }
    out.push((1.0 / double(j - i)) * acc);
    i = j;
  }
  return out;
}

}  // namespace

PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  return voxel_downsample_impl(cloud, voxel, true);
}
PointCloud voxel_downsample_serial(const PointCloud& cloud, double voxel) {
  return voxel_downsample_impl(cloud, voxel, false);
}

PointCloud fix_count(const PointCloud& cloud, int n, uint64_t seed) {
  if (n <= 0) core::fail("fix_count", "target count must be positive");
  PointCloud out;
  if (static_cast<int>(cloud.size()) > n) {
    core::RngStream rs(seed, "fix_count");
    auto pick = rs.sample_without_replacement(static_cast<int64_t>(cloud.size()), n);
    std::sort(pick.begin(), pick.end());  // preserve original ordering
    for (int64_t i : pick) out.push(cloud.points[static_cast<size_t>(i)], cloud.valid[static_cast<size_t>(i)]);
  } else {
    out = cloud;
    while (static_cast<int>(out.size()) < n) out.push({0, 0, 0}, false);
  }
  return out;
}

Pose wrist_camera_pose(const Pose& gripper_pose, const Pose& offset) {
  if (!gripper_pose.is_rigid(1e-9) || !offset.is_rigid(1e-9))
    core::fail("wrist_camera_pose", "rotation is not orthonormal to 1e-9");
  return gripper_pose.compose(offset);
}

}  // namespace clamp::geom
