// SPDX-License-Identifier: Apache-2.0
// Wall-clock comparison of the parallel kernels against their serial
// reference twins. The twins are bit-identical by construction; this target
// reports the speed side of that contract.
#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "clamp/core/rng.hpp"
#include "clamp/core/tensor.hpp"
#include "clamp/geom/point_cloud.hpp"
#include "clamp/geom/render.hpp"
#include "clamp/stringpe/string_encoding.hpp"
#include "clamp/world/scene.hpp"
#include "clamp/world/sensors.hpp"

namespace {

using namespace clamp;
using clock_type = std::chrono::steady_clock;

template <class F>
double time_best_ms(F&& f, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    auto t0 = clock_type::now();
    f();
    auto t1 = clock_type::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void report(const char* name, double serial_ms, double parallel_ms) {
  std::printf("%-18s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx\n", name, serial_ms,
              parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main(int argc, char** argv) {
  int reps = argc > 1 ? std::atoi(argv[1]) : 3;
  core::CounterRng rng(42);

  {  // dense matmul
    int n = 192;
    core::Tensor64 A({n, n}), B({n, n});
    for (int64_t i = 0; i < A.numel(); ++i) {
      A.data[i] = rng.normal("a", static_cast<uint64_t>(i));
      B.data[i] = rng.normal("b", static_cast<uint64_t>(i));
    }
    core::Tensor64 out;
    double s = time_best_ms([&] { out = core::matmul_serial(A, B); }, reps);
    double p = time_best_ms([&] { out = core::matmul(A, B); }, reps);
    report("matmul 192x192", s, p);
  }

  {  // rotation-encoded attention scores
    int n = 160, d = 32;
    core::Tensor64 Q({n, d}), K({n, d}), coords({n, 3});
    for (int64_t i = 0; i < Q.numel(); ++i) {
      Q.data[i] = rng.normal("q", static_cast<uint64_t>(i));
      K.data[i] = rng.normal("k", static_cast<uint64_t>(i));
    }
    for (int64_t i = 0; i < coords.numel(); ++i)
      coords.data[i] = rng.uniform("c", static_cast<uint64_t>(i)) - 0.5;
    stringpe::StringParams sp = stringpe::StringParams::init(d, 7, 0.3);
    core::Tensor64 out;
    double s = time_best_ms([&] { out = stringpe::attention_scores_serial(Q, K, coords, sp); }, reps);
    double p = time_best_ms([&] { out = stringpe::attention_scores(Q, K, coords, sp); }, reps);
    report("string scores", s, p);
  }

  world::Scene scene = world::gen_scene(3, "pick_place");
  world::RobotState robot = world::home_robot();
  {  // analytic RGB-D render
    geom::CameraModel cam = world::overhead_camera(96);
    world::SensorFrame f;
    double s = time_best_ms([&] { f = world::render_rgbd_serial(scene, robot, cam); }, reps);
    double p = time_best_ms([&] { f = world::render_rgbd(scene, robot, cam); }, reps);
    report("render_rgbd 96px", s, p);
  }

  geom::CameraModel cap = world::overhead_camera(128);
  world::SensorFrame frame = world::render_rgbd(scene, robot, cap);
  {  // unprojection
    geom::PointCloud pc;
    double s = time_best_ms([&] { pc = geom::unproject_serial(frame.depth, cap); }, reps);
    double p = time_best_ms([&] { pc = geom::unproject(frame.depth, cap); }, reps);
    report("unproject 128px", s, p);
  }

  geom::PointCloud cloud = geom::crop_aabb(geom::unproject(frame.depth, cap), geom::WorkspaceAABB{});
  {  // voxel grid downsample
    geom::PointCloud out;
    double s = time_best_ms([&] { out = geom::voxel_downsample_serial(cloud, 0.004); }, reps);
    double p = time_best_ms([&] { out = geom::voxel_downsample(cloud, 0.004); }, reps);
    report("voxel 4mm", s, p);
  }

  {  // point splat render
    geom::CameraModel view = world::overhead_camera(64);
    geom::DXYZImage img;
    double s = time_best_ms([&] { img = geom::render_view_serial(cloud, view); }, reps);
    double p = time_best_ms([&] { img = geom::render_view(cloud, view); }, reps);
    report("render_view 64px", s, p);
  }

  return 0;
}
