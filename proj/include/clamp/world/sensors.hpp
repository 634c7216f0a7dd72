// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "clamp/geom/camera.hpp"
#include "clamp/world/robot.hpp"
#include "clamp/world/scene.hpp"

namespace clamp::world {

// One camera's RGB-D capture. depth is height x width camera-frame z with
// zeros marking background, directly consumable by geometry unprojection;
// rgb is (height*width) x 3 rows in pixel row-major order.
struct SensorFrame {
  core::Tensor64 depth;
  core::Tensor64 rgb;
};

inline constexpr double kCamHeight = 0.70;     // above the tabletop
inline constexpr double kFocalPerPixel = 0.75;  // focal length = 0.75 * resolution

// fixed externals at opposite table corners: [front-left, back-right]
std::vector<geom::CameraModel> external_cameras(int res);
// straight-down virtual view over the table center
geom::CameraModel overhead_camera(int res);
// camera rigidly mounted behind/above a gripper, looking ahead and down
geom::CameraModel wrist_camera(const Pose& gripper_pose, int res);

// Analytic ray casting against table plane, scene primitives, and the two
// gripper markers: per-pixel nearest hit, flat shading. Exact camera-frame
// depths so unproject/re-render round-trips are sharp.
SensorFrame render_rgbd(const Scene& scene, const RobotState& robot,
                        const geom::CameraModel& cam);
SensorFrame render_rgbd_serial(const Scene& scene, const RobotState& robot,
                               const geom::CameraModel& cam);
// scene only, no gripper markers
SensorFrame render_rgbd(const Scene& scene, const geom::CameraModel& cam);

std::vector<SensorFrame> render_sensors(const Scene& scene, const RobotState& robot,
                                        const std::vector<geom::CameraModel>& cams);

}  // namespace clamp::world
