// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "clamp/geom/point_cloud.hpp"

namespace clamp::geom {

// Four channels per pixel: camera-frame depth D and global X, Y, Z. All-zero
// pixels are background (D = 0 iff no point landed there).
struct DXYZImage {
  int height = 0, width = 0;
  std::vector<double> data;  // height * width * 4, row-major

  DXYZImage() = default;
  DXYZImage(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w * 4, 0.0) {}

  double& at(int v, int u, int c) { return data[(static_cast<size_t>(v) * width + u) * 4 + c]; }
  double at(int v, int u, int c) const {
    return data[(static_cast<size_t>(v) * width + u) * 4 + c];
  }
};

struct MultiViewObservation {
  DXYZImage tiled;
  int n_views = 0;
  int view_w = 0, view_h = 0;
};

DXYZImage render_view(const PointCloud& cloud, const CameraModel& cam);
DXYZImage render_view_serial(const PointCloud& cloud, const CameraModel& cam);

// horizontal concat, canonical order [overhead, front-left, back-right, wrist-left, wrist-right]
MultiViewObservation tile_views(const std::vector<DXYZImage>& views);

// per-patch mean global XYZ over foreground pixels; all-background -> (0,0,0), false
std::pair<core::Tensor64, std::vector<uint8_t>> patch_coords(const MultiViewObservation& obs,
                                                             int patch);

}  // namespace clamp::geom
