// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "clamp/geom/pose.hpp"

namespace clamp::geom {

// Pinhole camera, CV convention: x right, y down, z forward (depth axis).
// Pixel (u,v) at depth d unprojects to ((u-cx)/fx*d, (v-cy)/fy*d, d) in the
// camera frame; extrinsics map camera frame to world.
struct CameraModel {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 1, height = 1;
  Pose cam_to_world;

  void validate() const {
    if (fx <= 0 || fy <= 0) core::fail("camera", "focal lengths must be positive");
    if (width <= 0 || height <= 0) core::fail("camera", "resolution must be positive");
    if (!cam_to_world.is_rigid(1e-9))
      core::fail("camera", "extrinsic rotation is not orthonormal (det-1 or R*R^T-I above 1e-9)");
  }
};

// Camera at `eye` with optical axis through `target`.
inline Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  Vec3 fwd = normalized(target - eye);
  Vec3 right = cross(fwd, up);
  if (norm(right) < 1e-9)
    core::fail("look_at", "up vector is parallel to the viewing direction");
  right = normalized(right);
  Vec3 down = cross(fwd, right);
  Pose p;
  // columns of R are the camera axes expressed in world coordinates
  p.R = {right[0], down[0], fwd[0], right[1], down[1], fwd[1], right[2], down[2], fwd[2]};
  p.t = eye;
  return p;
}

inline CameraModel make_camera(int res_w, int res_h, double focal_px, const Pose& cam_to_world) {
  CameraModel c;
  c.width = res_w;
  c.height = res_h;
  c.fx = c.fy = focal_px;
  c.cx = 0.5 * (res_w - 1);
  c.cy = 0.5 * (res_h - 1);
  c.cam_to_world = cam_to_world;
  return c;
}

}  // namespace clamp::geom
