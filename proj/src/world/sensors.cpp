// SPDX-License-Identifier: Apache-2.0
#include "clamp/world/sensors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "clamp/core/parallel.hpp"
#include "clamp/geom/point_cloud.hpp"

namespace clamp::world {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRayEps = 1e-9;
constexpr Vec3 kGripperHalf{0.015, 0.015, 0.025};

struct RayPrim {
  Prim prim;
  Vec3 c;
  Vec3 h;  // sphere radius in h[0]
  int color;
};

// ray parameter of the nearest sphere intersection, +inf on miss
double hit_sphere(const Vec3& o, const Vec3& d, const Vec3& c, double r) {
  Vec3 oc = o - c;
  double a = geom::dot(d, d);
  double hb = geom::dot(oc, d);
  double disc = hb * hb - a * (geom::dot(oc, oc) - r * r);
  if (disc < 0) return kInf;
  double sq = std::sqrt(disc);
  double s = (-hb - sq) / a;
  if (s > kRayEps) return s;
  s = (-hb + sq) / a;
  return s > kRayEps ? s : kInf;
}

// slab test for an axis-aligned box
double hit_box(const Vec3& o, const Vec3& d, const Vec3& c, const Vec3& h) {
  double lo = -kInf, hi = kInf;
  for (int a = 0; a < 3; ++a) {
    if (std::fabs(d[a]) < 1e-14) {
      if (std::fabs(o[a] - c[a]) > h[a]) return kInf;
      continue;
    }
    double t1 = (c[a] - h[a] - o[a]) / d[a];
    double t2 = (c[a] + h[a] - o[a]) / d[a];
    if (t1 > t2) std::swap(t1, t2);
    lo = std::max(lo, t1);
    hi = std::min(hi, t2);
  }
  if (hi < lo) return kInf;
  if (lo > kRayEps) return lo;
  return hi > kRayEps ? hi : kInf;
}

// finite tabletop rectangle at z = 0
double hit_table(const Vec3& o, const Vec3& d, double tx, double ty) {
  if (std::fabs(d[2]) < 1e-14) return kInf;
  double s = -o[2] / d[2];
  if (s <= kRayEps) return kInf;
  double x = o[0] + s * d[0], y = o[1] + s * d[1];
  return std::fabs(x) <= tx && std::fabs(y) <= ty ? s : kInf;
}

// one pixel: nearest hit over all primitives; ties go to the earlier
// primitive so output is independent of evaluation order
void shade_pixel(const std::vector<RayPrim>& prims, double tx, double ty, const Vec3& o,
                 const Vec3& d, double* depth, double* rgb) {
  double best = hit_table(o, d, tx, ty);
  int color = best < kInf ? kColTable : -1;
  for (const RayPrim& p : prims) {
    double s = p.prim == Prim::Sphere ? hit_sphere(o, d, p.c, p.h[0]) : hit_box(o, d, p.c, p.h);
    if (s < best) {
      best = s;
      color = p.color;
    }
  }
  if (color < 0) {
    *depth = 0;
    rgb[0] = rgb[1] = rgb[2] = 0;
    return;
  }
  *depth = best;
  const auto& col = palette(color);
  rgb[0] = col[0];
  rgb[1] = col[1];
  rgb[2] = col[2];
}

std::vector<RayPrim> collect_prims(const Scene& scene, const RobotState* robot) {
  std::vector<RayPrim> prims;
  prims.reserve(scene.objects.size() + 2);
  for (const auto& o : scene.objects) prims.push_back({o.prim, o.pos, o.half, o.color});
  if (robot) {
    prims.push_back({Prim::Box, robot->left.pos, kGripperHalf, kColGripperL});
    prims.push_back({Prim::Box, robot->right.pos, kGripperHalf, kColGripperR});
  }
  return prims;
}

// shared row kernel so the parallel and serial entry points are bit-identical
void render_row(const std::vector<RayPrim>& prims, const Scene& scene,
                const geom::CameraModel& cam, int v, core::Tensor64& depth, core::Tensor64& rgb) {
  const Vec3 o = cam.cam_to_world.t;
  for (int u = 0; u < cam.width; ++u) {
    Vec3 dcam{(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0};
    Vec3 d = cam.cam_to_world.rotate(dcam);  // z-normalized, so the parameter IS camera depth
    int64_t pix = static_cast<int64_t>(v) * cam.width + u;
    shade_pixel(prims, scene.table_x, scene.table_y, o, d, &depth.data[static_cast<size_t>(pix)],
                &rgb.data[static_cast<size_t>(pix) * 3]);
  }
}

SensorFrame render_impl(const Scene& scene, const RobotState* robot,
                        const geom::CameraModel& cam, bool parallel) {
  cam.validate();
  SensorFrame f;
  f.depth = core::Tensor64({cam.height, cam.width});
  f.rgb = core::Tensor64({cam.height * cam.width, 3});
  std::vector<RayPrim> prims = collect_prims(scene, robot);
  if (parallel) {
    core::parallel_for(cam.height,
                       [&](int64_t v) { render_row(prims, scene, cam, static_cast<int>(v), f.depth, f.rgb); });
  } else {
    for (int v = 0; v < cam.height; ++v) render_row(prims, scene, cam, v, f.depth, f.rgb);
  }
  return f;
}

}  // namespace

std::vector<geom::CameraModel> external_cameras(int res) {
  const Vec3 target{0, 0, 0.05};
  const Vec3 up{0, 0, 1};
  double focal = kFocalPerPixel * res;
  return {
      geom::make_camera(res, res, focal, geom::look_at({0.30, -0.40, kCamHeight}, target, up)),
      geom::make_camera(res, res, focal, geom::look_at({-0.30, 0.40, kCamHeight}, target, up)),
  };
}

geom::CameraModel overhead_camera(int res) {
  return geom::make_camera(res, res, kFocalPerPixel * res,
                           geom::look_at({0, 0, 0.90}, {0, 0, 0.0}, {1, 0, 0}));
}

geom::CameraModel wrist_camera(const Pose& gripper_pose, int res) {
  // mount: a bit behind and above the fingers, tilted ahead and down
  static const Pose offset = geom::look_at({-0.10, 0.0, 0.08}, {0.08, 0.0, -0.12}, {0, 0, 1});
  return geom::make_camera(res, res, kFocalPerPixel * res,
                           geom::wrist_camera_pose(gripper_pose, offset));
}

SensorFrame render_rgbd(const Scene& scene, const RobotState& robot,
                        const geom::CameraModel& cam) {
  return render_impl(scene, &robot, cam, true);
}

SensorFrame render_rgbd_serial(const Scene& scene, const RobotState& robot,
                               const geom::CameraModel& cam) {
  return render_impl(scene, &robot, cam, false);
}

SensorFrame render_rgbd(const Scene& scene, const geom::CameraModel& cam) {
  return render_impl(scene, nullptr, cam, true);
}

std::vector<SensorFrame> render_sensors(const Scene& scene, const RobotState& robot,
                                        const std::vector<geom::CameraModel>& cams) {
  if (cams.empty()) core::fail("render_sensors", "no cameras");
  std::vector<SensorFrame> out;
  out.reserve(cams.size());
  for (const auto& c : cams) out.push_back(render_rgbd(scene, robot, c));
  return out;
}

}  // namespace clamp::world
