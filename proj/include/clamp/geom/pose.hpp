// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>

#include "clamp/core/tensor.hpp"

namespace clamp::geom {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) {
  double n = norm(a);
  if (n < 1e-300) core::fail("vec3", "cannot normalize zero vector");
  return (1.0 / n) * a;
}

// Rigid transform p_world = R * p_local + t. Row-major 3x3 rotation.
struct Pose {
  std::array<double, 9> R{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 t{0, 0, 0};

  static Pose identity() { return {}; }

  Vec3 apply(const Vec3& p) const {
    return {R[0] * p[0] + R[1] * p[1] + R[2] * p[2] + t[0],
            R[3] * p[0] + R[4] * p[1] + R[5] * p[2] + t[1],
            R[6] * p[0] + R[7] * p[1] + R[8] * p[2] + t[2]};
  }
  Vec3 rotate(const Vec3& p) const {
    return {R[0] * p[0] + R[1] * p[1] + R[2] * p[2],
            R[3] * p[0] + R[4] * p[1] + R[5] * p[2],
            R[6] * p[0] + R[7] * p[1] + R[8] * p[2]};
  }

  Pose inverse() const {
    Pose o;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) o.R[i * 3 + j] = R[j * 3 + i];
    Vec3 rt = o.rotate(t);
    o.t = {-rt[0], -rt[1], -rt[2]};
    return o;
  }

  // (this ∘ other): apply other first, then this
  Pose compose(const Pose& o) const {
    Pose r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += R[i * 3 + k] * o.R[k * 3 + j];
        r.R[i * 3 + j] = s;
      }
    r.t = apply(o.t);
    return r;
  }

  // max |R R^T - I| entry
  double orthonormality_error() const {
    double e = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += R[i * 3 + k] * R[j * 3 + k];
        e = std::max(e, std::fabs(s - (i == j ? 1.0 : 0.0)));
      }
    return e;
  }
  double det() const {
    return R[0] * (R[4] * R[8] - R[5] * R[7]) - R[1] * (R[3] * R[8] - R[5] * R[6]) +
           R[2] * (R[3] * R[7] - R[4] * R[6]);
  }
  bool is_rigid(double tol = 1e-9) const {
    return orthonormality_error() < tol && std::fabs(det() - 1.0) < tol;
  }
};

inline Pose rot_x(double a) {
  Pose p;
  double c = std::cos(a), s = std::sin(a);
  p.R = {1, 0, 0, 0, c, -s, 0, s, c};
  return p;
}
inline Pose rot_y(double a) {
  Pose p;
  double c = std::cos(a), s = std::sin(a);
  p.R = {c, 0, s, 0, 1, 0, -s, 0, c};
  return p;
}
inline Pose rot_z(double a) {
  Pose p;
  double c = std::cos(a), s = std::sin(a);
  p.R = {c, -s, 0, s, c, 0, 0, 0, 1};
  return p;
}

// R = Rz(yaw) * Ry(pitch) * Rx(roll)
inline Pose pose_rpy(const Vec3& pos, double roll, double pitch, double yaw) {
  Pose p = rot_z(yaw).compose(rot_y(pitch)).compose(rot_x(roll));
  p.t = pos;
  return p;
}

}  // namespace clamp::geom
