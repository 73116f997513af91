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

#include "quadbench/math.hpp"

#include <random>

#include "doctest.h"

using namespace quadbench;

namespace {

Quat random_unit_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Quat q{n(rng), n(rng), n(rng), n(rng)};
  return q.normalized();
}

Vec3 random_vec3(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return Vec3{u(rng), u(rng), u(rng)};
}

}  // namespace

TEST_CASE("quat_rotate identity and quarter turn") {
  const Vec3 v{1.0, 2.0, 3.0};
  CHECK((quat_rotate(Quat::identity(), v) - v).norm() == doctest::Approx(0.0).epsilon(1e-15));

  const Quat qz90 = Quat::from_axis_angle(Vec3::UnitZ(), M_PI / 2.0);
  const Vec3 r = quat_rotate(qz90, Vec3{1.0, 0.0, 0.0});
  CHECK(r.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.y() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.z() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("quat_rotate preserves norm") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    const Quat q = random_unit_quat(rng);
    const Vec3 v = random_vec3(rng, 10.0);
    CHECK(quat_rotate(q, v).norm() == doctest::Approx(v.norm()).epsilon(1e-12));
  }
}

TEST_CASE("quat_rotate_inverse undoes quat_rotate") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    const Quat q = random_unit_quat(rng);
    const Vec3 v = random_vec3(rng, 5.0);
    CHECK((quat_rotate_inverse(q, quat_rotate(q, v)) - v).norm() < 1e-11);
  }
}

TEST_CASE("quat_to_rotmat special cases") {
  CHECK((quat_to_rotmat(Quat::identity()) - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-15);

  const Quat qx180 = Quat::from_axis_angle(Vec3::UnitX(), M_PI);
  const Mat3 expected = Vec3{1.0, -1.0, -1.0}.asDiagonal();
  CHECK((quat_to_rotmat(qx180) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("quat_to_rotmat is orthonormal and agrees with quat_rotate") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 200; ++i) {
    const Quat q = random_unit_quat(rng);
    const Mat3 R = quat_to_rotmat(q);
    CHECK((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    // R v must match the quaternion rotation on the basis vectors.
    for (int axis = 0; axis < 3; ++axis) {
      const Vec3 e = Mat3::Identity().col(axis);
      CHECK((R * e - quat_rotate(q, e)).norm() < 1e-12);
    }
  }
}

TEST_CASE("quat_derivative") {
  const Quat q0_dot = quat_derivative(Quat::identity(), Vec3::Zero());
  CHECK(q0_dot.norm() == doctest::Approx(0.0).epsilon(1e-15));

  // 1/2 * (1,0,0,0) * (0, 0,0,2) = (0,0,0,1)
  const Quat qdot = quat_derivative(Quat::identity(), Vec3{0.0, 0.0, 2.0});
  CHECK(qdot.w == doctest::Approx(0.0));
  CHECK(qdot.x == doctest::Approx(0.0));
  CHECK(qdot.y == doctest::Approx(0.0));
  CHECK(qdot.z == doctest::Approx(1.0));
}

TEST_CASE("quat_derivative is tangent to the unit sphere") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 100; ++i) {
    const Quat q = random_unit_quat(rng);
    const Quat qdot = quat_derivative(q, random_vec3(rng, 8.0));
    CHECK(std::abs(q.dot(qdot)) < 1e-12);
  }
}

TEST_CASE("rotation composition is associative") {
  std::mt19937_64 rng(19);
  for (int i = 0; i < 100; ++i) {
    const Quat q1 = random_unit_quat(rng);
    const Quat q2 = random_unit_quat(rng);
    const Vec3 v = random_vec3(rng, 3.0);
    const Vec3 lhs = quat_rotate((q1 * q2).normalized(), v);
    const Vec3 rhs = quat_rotate(q1, quat_rotate(q2, v));
    CHECK((lhs - rhs).norm() < 1e-10);
  }
}

TEST_CASE("quat -> rotmat -> quat round trip") {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 200; ++i) {
    const Quat q = random_unit_quat(rng);
    const Quat q2 = rotmat_to_quat(quat_to_rotmat(q));
    // q and -q are the same rotation; compare by angle, not components.
    CHECK(rotation_angle_between(q, q2) < 1e-8);
  }
}

TEST_CASE("normalization restores unit norm") {
  Quat q{0.9, 0.1, -0.4, 0.2};
  CHECK(std::abs(q.normalized().squared_norm() - 1.0) < 1e-9);
}
