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

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "quadbench/config.hpp"
#include "quadbench/math.hpp"

namespace quadbench {

// Physical constants of the platform. Nominal values are the identified
// parameters of the simulated quadrotor; the randomization spec below
// perturbs a subset of them per rollout.
struct PhysParams {
  double mass{0.768};                    // kg
  Vec3 inertia{2.5e-3, 2.1e-3, 4.3e-3};  // kg m^2, diagonal
  Vec3 gravity{0.0, 0.0, -9.81};         // m/s^2, world frame
  Vec3 drag_coeff{0.3, 0.3, 0.15};       // N s/m, body-frame linear drag (k_vx, k_vy, k_vz)
  double thrust_coeff{1.563e-6};         // N/(rad/s)^2  (c_l)
  double drag_torque_coeff{1.909e-8};    // N m/(rad/s)^2  (c_d)
  double motor_tau{0.033};               // s, first-order motor time constant
  double max_rotor_thrust{8.0};          // N, per rotor

  // X configuration, arm length 0.125 m; spin[i] is the sign of the
  // reaction torque rotor i exerts about body z.
  std::array<Vec3, 4> rotor_pos{};
  std::array<double, 4> rotor_spin{-1.0, 1.0, -1.0, 1.0};

  // Per-rotor multiplicative thrust randomization, identity when disabled.
  Vec4 thrust_scale{Vec4::Ones()};

  PhysParams() {
    const double d = 0.125 / std::numbers::sqrt2;
    rotor_pos = {Vec3{d, d, 0.0}, Vec3{-d, d, 0.0}, Vec3{-d, -d, 0.0}, Vec3{d, -d, 0.0}};
  }

  double max_rotor_speed() const { return std::sqrt(max_rotor_thrust / thrust_coeff); }
  double hover_thrust_total() const { return mass * -gravity.z(); }
  double hover_rotor_speed() const {
    return std::sqrt(hover_thrust_total() / (4.0 * thrust_coeff));
  }
  // Max mass-normalized collective thrust a controller may command (m/s^2).
  double max_collective_accel() const { return 4.0 * max_rotor_thrust / mass; }

  static PhysParams from_config(const Config& cfg);
  void to_config(Config& cfg) const;
};

// Uniform half-widths applied around the nominal parameters at the start
// of each rollout. Relative where the identification table is relative
// (mass, inertia), additive elsewhere.
struct RandomizationSpec {
  double mass_rel{0.30};
  double inertia_rel{0.30};
  double gravity_z_abs{0.4};            // m/s^2, additive on the z component
  Vec3 drag_abs{0.3, 0.3, 0.15};        // N s/m
  double thrust_coeff_abs{0.0};
  double drag_torque_coeff_abs{0.0};
  double thrust_scale_rel{0.0};         // per-rotor, off by default

  static RandomizationSpec none() {
    RandomizationSpec s;
    s.mass_rel = 0.0;
    s.inertia_rel = 0.0;
    s.gravity_z_abs = 0.0;
    s.drag_abs.setZero();
    return s;
  }

  static RandomizationSpec from_config(const Config& cfg);
  void to_config(Config& cfg) const;
};

// Platform state: position, attitude, world-frame velocity, body rates,
// four rotor speeds. 3 + 4 + 3 + 3 + 4 = 17 dimensions.
struct QuadState {
  Vec3 position{Vec3::Zero()};     // m, world
  Quat attitude{};                 // body -> world
  Vec3 velocity{Vec3::Zero()};     // m/s, world
  Vec3 bodyrate{Vec3::Zero()};     // rad/s, body
  Vec4 rotor_speed{Vec4::Zero()};  // rad/s

  static constexpr int kDim = 17;

  Eigen::Matrix<double, kDim, 1> to_vector() const;
  static QuadState from_vector(const Eigen::Matrix<double, kDim, 1>& v);
};

struct QuadStateDerivative {
  Vec3 d_position;
  Quat d_attitude;
  Vec3 d_velocity;
  Vec3 d_bodyrate;
  Vec4 d_rotor_speed;

  Eigen::Matrix<double, QuadState::kDim, 1> to_vector() const;
};

struct Wrench {
  Vec3 force{Vec3::Zero()};   // N, body frame
  Vec3 torque{Vec3::Zero()};  // N m, body frame
};

// Body-frame force and torque produced by the four propellers:
// f_i = c_l Ω_i² ẑ, τ_i = spin_i c_d Ω_i² ẑ, plus moment arms r_i × f_i.
Wrench prop_wrench(const Vec4& rotor_speed, const PhysParams& params);

// Full 17-state continuous dynamics with linear body-frame drag and
// first-order motor lag driven by rotor-speed setpoints.
QuadStateDerivative state_derivative(const QuadState& x, const PhysParams& params,
                                     const Vec4& rotor_speed_cmd);

// Semi-implicit (symplectic) Euler step: velocity-level states first, then
// configuration with the updated velocities. Renormalizes the quaternion
// and clamps rotor speeds to [0, max_rotor_speed].
QuadState step_symplectic_euler(const QuadState& x, const PhysParams& params,
                                const Vec4& rotor_speed_cmd, double dt);

// Uniform parameter sample inside the given intervals; identical output for
// identical seeds.
PhysParams sample_params(const PhysParams& nominal, const RandomizationSpec& spec,
                         uint64_t seed);

}  // namespace quadbench
