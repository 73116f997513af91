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

#include "quadbench/dynamics.hpp"

#include <random>

namespace quadbench {

PhysParams PhysParams::from_config(const Config& cfg) {
  PhysParams p;
  p.mass = cfg.get_double("dynamics.mass", p.mass);
  p.inertia = cfg.get_vec3("dynamics.inertia", p.inertia);
  p.gravity = cfg.get_vec3("dynamics.gravity", p.gravity);
  p.drag_coeff = cfg.get_vec3("dynamics.drag_coeff", p.drag_coeff);
  p.thrust_coeff = cfg.get_double("dynamics.thrust_coeff", p.thrust_coeff);
  p.drag_torque_coeff = cfg.get_double("dynamics.drag_torque_coeff", p.drag_torque_coeff);
  p.motor_tau = cfg.get_double("dynamics.motor_tau", p.motor_tau);
  p.max_rotor_thrust = cfg.get_double("dynamics.max_rotor_thrust", p.max_rotor_thrust);
  const double arm = cfg.get_double("dynamics.arm_length", 0.125);
  const double d = arm / std::numbers::sqrt2;
  p.rotor_pos = {Vec3{d, d, 0.0}, Vec3{-d, d, 0.0}, Vec3{-d, -d, 0.0}, Vec3{d, -d, 0.0}};
  return p;
}

void PhysParams::to_config(Config& cfg) const {
  cfg.set_double("dynamics.mass", mass);
  cfg.set_vec3("dynamics.inertia", inertia);
  cfg.set_vec3("dynamics.gravity", gravity);
  cfg.set_vec3("dynamics.drag_coeff", drag_coeff);
  cfg.set_double("dynamics.thrust_coeff", thrust_coeff);
  cfg.set_double("dynamics.drag_torque_coeff", drag_torque_coeff);
  cfg.set_double("dynamics.motor_tau", motor_tau);
  cfg.set_double("dynamics.max_rotor_thrust", max_rotor_thrust);
  cfg.set_double("dynamics.arm_length", rotor_pos[0].x() * std::numbers::sqrt2);
}

RandomizationSpec RandomizationSpec::from_config(const Config& cfg) {
  RandomizationSpec s;
  s.mass_rel = cfg.get_double("randomization.mass_rel", s.mass_rel);
  s.inertia_rel = cfg.get_double("randomization.inertia_rel", s.inertia_rel);
  s.gravity_z_abs = cfg.get_double("randomization.gravity_z_abs", s.gravity_z_abs);
  s.drag_abs = cfg.get_vec3("randomization.drag_abs", s.drag_abs);
  s.thrust_coeff_abs = cfg.get_double("randomization.thrust_coeff_abs", s.thrust_coeff_abs);
  s.drag_torque_coeff_abs =
      cfg.get_double("randomization.drag_torque_coeff_abs", s.drag_torque_coeff_abs);
  s.thrust_scale_rel = cfg.get_double("randomization.thrust_scale_rel", s.thrust_scale_rel);
  return s;
}

void RandomizationSpec::to_config(Config& cfg) const {
  cfg.set_double("randomization.mass_rel", mass_rel);
  cfg.set_double("randomization.inertia_rel", inertia_rel);
  cfg.set_double("randomization.gravity_z_abs", gravity_z_abs);
  cfg.set_vec3("randomization.drag_abs", drag_abs);
  cfg.set_double("randomization.thrust_coeff_abs", thrust_coeff_abs);
  cfg.set_double("randomization.drag_torque_coeff_abs", drag_torque_coeff_abs);
  cfg.set_double("randomization.thrust_scale_rel", thrust_scale_rel);
}

Eigen::Matrix<double, QuadState::kDim, 1> QuadState::to_vector() const {
  Eigen::Matrix<double, kDim, 1> v;
  v.segment<3>(0) = position;
  v(3) = attitude.w;
  v(4) = attitude.x;
  v(5) = attitude.y;
  v(6) = attitude.z;
  v.segment<3>(7) = velocity;
  v.segment<3>(10) = bodyrate;
  v.segment<4>(13) = rotor_speed;
  return v;
}

QuadState QuadState::from_vector(const Eigen::Matrix<double, kDim, 1>& v) {
  QuadState x;
  x.position = v.segment<3>(0);
  x.attitude = Quat{v(3), v(4), v(5), v(6)};
  x.velocity = v.segment<3>(7);
  x.bodyrate = v.segment<3>(10);
  x.rotor_speed = v.segment<4>(13);
  return x;
}

Eigen::Matrix<double, QuadState::kDim, 1> QuadStateDerivative::to_vector() const {
  Eigen::Matrix<double, QuadState::kDim, 1> v;
  v.segment<3>(0) = d_position;
  v(3) = d_attitude.w;
  v(4) = d_attitude.x;
  v(5) = d_attitude.y;
  v(6) = d_attitude.z;
  v.segment<3>(7) = d_velocity;
  v.segment<3>(10) = d_bodyrate;
  v.segment<4>(13) = d_rotor_speed;
  return v;
}

Wrench prop_wrench(const Vec4& rotor_speed, const PhysParams& params) {
  Wrench w;
  for (int i = 0; i < 4; ++i) {
    const double f = params.thrust_scale(i) * params.thrust_coeff * rotor_speed(i) * rotor_speed(i);
    const Vec3 force_i{0.0, 0.0, f};
    w.force += force_i;
    w.torque += params.rotor_pos[i].cross(force_i);
    w.torque.z() += params.rotor_spin[i] * params.drag_torque_coeff * rotor_speed(i) * rotor_speed(i);
  }
  return w;
}

QuadStateDerivative state_derivative(const QuadState& x, const PhysParams& params,
                                     const Vec4& rotor_speed_cmd) {
  const Wrench w = prop_wrench(x.rotor_speed, params);

  // Linear drag acts along the body axes on the body-frame velocity.
  const Vec3 v_body = quat_rotate_inverse(x.attitude, x.velocity);
  const Vec3 drag_body = -params.drag_coeff.cwiseProduct(v_body);

  QuadStateDerivative dx;
  dx.d_position = x.velocity;
  dx.d_attitude = quat_derivative(x.attitude, x.bodyrate);
  dx.d_velocity = params.gravity + quat_rotate(x.attitude, (w.force + drag_body) / params.mass);
  const Vec3 J = params.inertia;
  const Vec3 Jw{J.x() * x.bodyrate.x(), J.y() * x.bodyrate.y(), J.z() * x.bodyrate.z()};
  const Vec3 tau = w.torque - x.bodyrate.cross(Jw);
  dx.d_bodyrate = Vec3{tau.x() / J.x(), tau.y() / J.y(), tau.z() / J.z()};
  dx.d_rotor_speed = (rotor_speed_cmd - x.rotor_speed) / params.motor_tau;
  return dx;
}

QuadState step_symplectic_euler(const QuadState& x, const PhysParams& params,
                                const Vec4& rotor_speed_cmd, double dt) {
  const QuadStateDerivative dx = state_derivative(x, params, rotor_speed_cmd);

  QuadState next;
  // Velocity-level states first...
  next.velocity = x.velocity + dt * dx.d_velocity;
  next.bodyrate = x.bodyrate + dt * dx.d_bodyrate;
  next.rotor_speed =
      (x.rotor_speed + dt * dx.d_rotor_speed).cwiseMax(0.0).cwiseMin(params.max_rotor_speed());
  // ...then the configuration, advanced with the updated velocities.
  next.position = x.position + dt * next.velocity;
  next.attitude = (x.attitude + quat_derivative(x.attitude, next.bodyrate) * dt).normalized();
  return next;
}

PhysParams sample_params(const PhysParams& nominal, const RandomizationSpec& spec, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  PhysParams p = nominal;
  p.mass = nominal.mass * (1.0 + spec.mass_rel * u(rng));
  for (int i = 0; i < 3; ++i) {
    p.inertia(i) = nominal.inertia(i) * (1.0 + spec.inertia_rel * u(rng));
  }
  p.gravity.z() = nominal.gravity.z() + spec.gravity_z_abs * u(rng);
  for (int i = 0; i < 3; ++i) {
    p.drag_coeff(i) = std::max(0.0, nominal.drag_coeff(i) + spec.drag_abs(i) * u(rng));
  }
  p.thrust_coeff = nominal.thrust_coeff + spec.thrust_coeff_abs * u(rng);
  p.drag_torque_coeff = nominal.drag_torque_coeff + spec.drag_torque_coeff_abs * u(rng);
  for (int i = 0; i < 4; ++i) {
    p.thrust_scale(i) = 1.0 + spec.thrust_scale_rel * u(rng);
  }
  return p;
}

}  // namespace quadbench
