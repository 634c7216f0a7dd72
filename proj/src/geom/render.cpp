// SPDX-License-Identifier: Apache-2.0
#include "clamp/geom/render.hpp"

#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace clamp::geom {

namespace {

constexpr double kMinDepth = 1e-9;

struct Hit {
  double d = std::numeric_limits<double>::infinity();
  int64_t idx = -1;
};

// nearest depth wins; exact ties resolved to the lowest point index, so the
// result is independent of traversal order
inline bool better(const Hit& a, const Hit& b) {
  return a.d < b.d || (a.d == b.d && a.idx < b.idx);
}

DXYZImage finish(const PointCloud& cloud, const CameraModel& cam, const std::vector<Hit>& zbuf) {
  DXYZImage img(cam.height, cam.width);
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u) {
      const Hit& h = zbuf[static_cast<size_t>(v) * cam.width + u];
      if (h.idx < 0) continue;
      const Vec3& p = cloud.points[static_cast<size_t>(h.idx)];
      img.at(v, u, 0) = h.d;
      img.at(v, u, 1) = p[0];
      img.at(v, u, 2) = p[1];
      img.at(v, u, 3) = p[2];
    }
  return img;
}

}  // namespace

DXYZImage render_view_serial(const PointCloud& cloud, const CameraModel& cam) {
  cam.validate();
  std::vector<Hit> zbuf(static_cast<size_t>(cam.height) * cam.width);
  Pose w2c = cam.cam_to_world.inverse();
  for (int64_t i = 0; i < static_cast<int64_t>(cloud.size()); ++i) {
    if (!cloud.valid[static_cast<size_t>(i)]) continue;
    Vec3 pc = w2c.apply(cloud.points[static_cast<size_t>(i)]);
    if (pc[2] < kMinDepth) continue;
    long lu = std::lround(cam.fx * pc[0] / pc[2] + cam.cx);
    long lv = std::lround(cam.fy * pc[1] / pc[2] + cam.cy);
    if (lu < 0 || lu >= cam.width || lv < 0 || lv >= cam.height) continue;
    Hit h{pc[2], i};
    Hit& cur = zbuf[static_cast<size_t>(lv) * cam.width + lu];
    if (better(h, cur)) cur = h;
  }
  return finish(cloud, cam, zbuf);
}

DXYZImage render_view(const PointCloud& cloud, const CameraModel& cam) {
  cam.validate();
  const size_t npix = static_cast<size_t>(cam.height) * cam.width;
  std::vector<Hit> zbuf(npix);
  Pose w2c = cam.cam_to_world.inverse();
  const int64_t n = static_cast<int64_t>(cloud.size());
#ifdef _OPENMP
#pragma omp parallel
  {
    std::vector<Hit> local(npix);
#pragma omp for schedule(static) nowait
    for (int64_t i = 0; i < n; ++i) {
      if (!cloud.valid[static_cast<size_t>(i)]) continue;
      Vec3 pc = w2c.apply(cloud.points[static_cast<size_t>(i)]);
      if (pc[2] < kMinDepth) continue;
      long lu = std::lround(cam.fx * pc[0] / pc[2] + cam.cx);
      long lv = std::lround(cam.fy * pc[1] / pc[2] + cam.cy);
      if (lu < 0 || lu >= cam.width || lv < 0 || lv >= cam.height) continue;
      Hit h{pc[2], i};
      Hit& cur = local[static_cast<size_t>(lv) * cam.width + lu];
      if (better(h, cur)) cur = h;
    }
    // (depth, index) lexicographic merge is associative and commutative, so
    // the merged buffer matches the serial loop exactly
#pragma omp critical
    for (size_t p = 0; p < npix; ++p)
      if (better(local[p], zbuf[p])) zbuf[p] = local[p];
  }
#else
  for (int64_t i = 0; i < n; ++i) {
    if (!cloud.valid[static_cast<size_t>(i)]) continue;
    Vec3 pc = w2c.apply(cloud.points[static_cast<size_t>(i)]);
    if (pc[2] < kMinDepth) continue;
    long lu = std::lround(cam.fx * pc[0] / pc[2] + cam.cx);
    long lv = std::lround(cam.fy * pc[1] / pc[2] + cam.cy);
    if (lu < 0 || lu >= cam.width || lv < 0 || lv >= cam.height) continue;
    Hit h{pc[2], i};
    Hit& cur = zbuf[static_cast<size_t>(lv) * cam.width + lu];
    if (better(h, cur)) cur = h;
  }
#endif
  return finish(cloud, cam, zbuf);
}

MultiViewObservation tile_views(const std::vector<DXYZImage>& views) {
  if (views.empty()) core::fail("tile_views", "no views");
  int h = views[0].height, w = views[0].width;
  for (auto& v : views)
    if (v.height != h || v.width != w)
      core::fail("tile_views", "view dims mismatch: expected " + std::to_string(w) + "x" +
                                   std::to_string(h) + ", got " + std::to_string(v.width) + "x" +
                                   std::to_string(v.height));
  MultiViewObservation obs;
  obs.n_views = static_cast<int>(views.size());
  obs.view_w = w;
  obs.view_h = h;
  obs.tiled = DXYZImage(h, w * obs.n_views);
  for (int i = 0; i < obs.n_views; ++i)
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        for (int ch = 0; ch < 4; ++ch) obs.tiled.at(r, i * w + c, ch) = views[i].at(r, c, ch);
  return obs;
}

std::pair<core::Tensor64, std::vector<uint8_t>> patch_coords(const MultiViewObservation& obs,
                                                             int patch) {
  const DXYZImage& img = obs.tiled;
  if (patch <= 0 || img.height % patch != 0 || img.width % patch != 0)
    core::fail("patch_coords", "patch " + std::to_string(patch) + " must divide tiled dims " +
                                   std::to_string(img.width) + "x" + std::to_string(img.height));
  int ph = img.height / patch, pw = img.width / patch;
  int P = ph * pw;
  core::Tensor64 coords({P, 3});
  std::vector<uint8_t> valid(static_cast<size_t>(P), 0);
  for (int py = 0; py < ph; ++py)
    for (int px = 0; px < pw; ++px) {
      double acc[3] = {0, 0, 0};
      int cnt = 0;
      for (int dy = 0; dy < patch; ++dy)
        for (int dx = 0; dx < patch; ++dx) {
          int v = py * patch + dy, u = px * patch + dx;
          if (img.at(v, u, 0) > 0) {
            acc[0] += img.at(v, u, 1);
            acc[1] += img.at(v, u, 2);
            acc[2] += img.at(v, u, 3);
            ++cnt;
          }
        }
      int p = py * pw + px;
      if (cnt > 0) {
        coords.at(p, 0) = acc[0] / cnt;
        coords.at(p, 1) = acc[1] / cnt;
        coords.at(p, 2) = acc[2] / cnt;
        valid[static_cast<size_t>(p)] = 1;
      }
    }
  return {std::move(coords), std::move(valid)};
}

}  // namespace clamp::geom
