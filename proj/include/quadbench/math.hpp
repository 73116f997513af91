// Copyright 2026 The quadbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>

#include <cassert>
#include <cmath>

namespace quadbench {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

// Hamilton quaternion, scalar-first (w, x, y, z).
// Unit quaternions represent body-to-world rotations; q and -q encode the
// same rotation, so comparisons go through rotation_angle_between().
struct Quat {
  double w{1.0}, x{0.0}, y{0.0}, z{0.0};

  Quat() = default;
  Quat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

  static Quat identity() { return {1.0, 0.0, 0.0, 0.0}; }

  static Quat from_axis_angle(const Vec3& axis, double angle) {
    const double n = axis.norm();
    if (n < 1e-300) return identity();
    const double half = 0.5 * angle;
    const double s = std::sin(half) / n;
    return {std::cos(half), axis.x() * s, axis.y() * s, axis.z() * s};
  }

  // Hamilton product: this ⊗ r.
  Quat operator*(const Quat& r) const {
    return {w * r.w - x * r.x - y * r.y - z * r.z,
            w * r.x + x * r.w + y * r.z - z * r.y,
            w * r.y - x * r.z + y * r.w + z * r.x,
            w * r.z + x * r.y - y * r.x + z * r.w};
  }

  Quat operator+(const Quat& r) const { return {w + r.w, x + r.x, y + r.y, z + r.z}; }
  Quat operator*(double s) const { return {w * s, x * s, y * s, z * s}; }
  Quat operator-() const { return {-w, -x, -y, -z}; }

  Quat conjugate() const { return {w, -x, -y, -z}; }

  double squared_norm() const { return w * w + x * x + y * y + z * z; }
  double norm() const { return std::sqrt(squared_norm()); }

  Quat normalized() const {
    const double n = norm();
    if (n < 1e-300) return identity();
    const double inv = 1.0 / n;
    return {w * inv, x * inv, y * inv, z * inv};
  }

  Vec3 vec() const { return {x, y, z}; }

  double dot(const Quat& r) const { return w * r.w + x * r.x + y * r.y + z * r.z; }

  // Canonical sign (w >= 0); equality of rotations, not of components.
  Quat canonical() const { return (w < 0.0) ? -*this : *this; }
};

// Rotates v by a unit quaternion: q v q̄.
inline Vec3 quat_rotate(const Quat& q, const Vec3& v) {
  assert(std::abs(q.squared_norm() - 1.0) < 1e-6 && "quat_rotate requires unit q");
  // Expanded form of q ⊗ (0, v) ⊗ q̄: v + 2 w (u × v) + 2 u × (u × v).
  const Vec3 u = q.vec();
  const Vec3 t = 2.0 * u.cross(v);
  return v + q.w * t + u.cross(t);
}

// Rotates v by the inverse rotation: q̄ v q.
inline Vec3 quat_rotate_inverse(const Quat& q, const Vec3& v) {
  return quat_rotate(q.conjugate(), v);
}

// Rotation matrix R with R v = quat_rotate(q, v).
inline Mat3 quat_to_rotmat(const Quat& q) {
  assert(std::abs(q.squared_norm() - 1.0) < 1e-6 && "quat_to_rotmat requires unit q");
  const double ww = q.w * q.w, xx = q.x * q.x, yy = q.y * q.y, zz = q.z * q.z;
  const double wx = q.w * q.x, wy = q.w * q.y, wz = q.w * q.z;
  const double xy = q.x * q.y, xz = q.x * q.z, yz = q.y * q.z;
  Mat3 r;
  r << ww + xx - yy - zz, 2.0 * (xy - wz), 2.0 * (xz + wy),
       2.0 * (xy + wz), ww - xx + yy - zz, 2.0 * (yz - wx),
       2.0 * (xz - wy), 2.0 * (yz + wx), ww - xx - yy + zz;
  return r;
}

// Shepperd's method; returns a unit quaternion for any proper rotation matrix.
inline Quat rotmat_to_quat(const Mat3& r) {
  Quat q;
  const double tr = r.trace();
  if (tr > 0.0) {
    double s = 2.0 * std::sqrt(tr + 1.0);
    q.w = 0.25 * s;
    q.x = (r(2, 1) - r(1, 2)) / s;
    q.y = (r(0, 2) - r(2, 0)) / s;
    q.z = (r(1, 0) - r(0, 1)) / s;
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    double s = 2.0 * std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2));
    q.w = (r(2, 1) - r(1, 2)) / s;
    q.x = 0.25 * s;
    q.y = (r(0, 1) + r(1, 0)) / s;
    q.z = (r(0, 2) + r(2, 0)) / s;
  } else if (r(1, 1) > r(2, 2)) {
    double s = 2.0 * std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2));
    q.w = (r(0, 2) - r(2, 0)) / s;
    q.x = (r(0, 1) + r(1, 0)) / s;
    q.y = 0.25 * s;
    q.z = (r(1, 2) + r(2, 1)) / s;
  } else {
    double s = 2.0 * std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1));
    q.w = (r(1, 0) - r(0, 1)) / s;
    q.x = (r(0, 2) + r(2, 0)) / s;
    q.y = (r(1, 2) + r(2, 1)) / s;
    q.z = 0.25 * s;
  }
  return q.normalized();
}

// Attitude kinematics: q̇ = ½ q ⊗ (0, ω), ω in the body frame.
inline Quat quat_derivative(const Quat& q, const Vec3& omega_body) {
  const Quat omega_quat{0.0, omega_body.x(), omega_body.y(), omega_body.z()};
  return (q * omega_quat) * 0.5;
}

// Angle of the relative rotation between two unit quaternions [0, pi].
inline double rotation_angle_between(const Quat& a, const Quat& b) {
  // atan2 form: accurate for small angles where acos(dot) loses precision.
  const Quat err = a.conjugate() * b;
  const double s = std::sqrt(err.x * err.x + err.y * err.y + err.z * err.z);
  return 2.0 * std::atan2(s, std::abs(err.w));
}

inline Vec3 clamp_vec(const Vec3& v, const Vec3& lo, const Vec3& hi) {
  return v.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace quadbench
