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

#include "quadbench/actuation.hpp"

#include <algorithm>
#include <stdexcept>

namespace quadbench {

namespace {

double yaw_of(const Quat& q) {
  return std::atan2(2.0 * (q.w * q.z + q.x * q.y), 1.0 - 2.0 * (q.y * q.y + q.z * q.z));
}

}  // namespace

ActionSpace action_space_from_string(const std::string& name) {
  if (name == "srt") return ActionSpace::kSrt;
  if (name == "ctbr") return ActionSpace::kCtbr;
  if (name == "lv") return ActionSpace::kLv;
  throw std::runtime_error("unknown action space '" + name + "' (expected srt|ctbr|lv)");
}

std::string to_string(ActionSpace space) {
  switch (space) {
    case ActionSpace::kSrt: return "srt";
    case ActionSpace::kCtbr: return "ctbr";
    case ActionSpace::kLv: return "lv";
  }
  return "?";
}

CommandLimits CommandLimits::from_params(const PhysParams& nominal) {
  CommandLimits lim;
  lim.srt_max = nominal.max_rotor_thrust;
  lim.collective_max = nominal.max_collective_accel();
  return lim;
}

CommandLimits CommandLimits::from_config(const Config& cfg, const PhysParams& nominal) {
  CommandLimits lim = from_params(nominal);
  lim.srt_max = cfg.get_double("limits.srt_max", lim.srt_max);
  lim.collective_max = cfg.get_double("limits.collective_max", lim.collective_max);
  lim.bodyrate_max = cfg.get_vec3("limits.bodyrate_max", lim.bodyrate_max);
  lim.velocity_max = cfg.get_double("limits.velocity_max", lim.velocity_max);
  lim.yaw_rate_max = cfg.get_double("limits.yaw_rate_max", lim.yaw_rate_max);
  return lim;
}

void CommandLimits::to_config(Config& cfg) const {
  cfg.set_double("limits.srt_max", srt_max);
  cfg.set_double("limits.collective_max", collective_max);
  cfg.set_vec3("limits.bodyrate_max", bodyrate_max);
  cfg.set_double("limits.velocity_max", velocity_max);
  cfg.set_double("limits.yaw_rate_max", yaw_rate_max);
}

SrtCommand CommandLimits::clamp(const SrtCommand& c) const {
  return SrtCommand{c.thrust.cwiseMax(0.0).cwiseMin(srt_max)};
}

CtbrCommand CommandLimits::clamp(const CtbrCommand& c) const {
  CtbrCommand out;
  out.collective = std::clamp(c.collective, 0.0, collective_max);
  out.bodyrate = clamp_vec(c.bodyrate, -bodyrate_max, bodyrate_max);
  return out;
}

LvCommand CommandLimits::clamp(const LvCommand& c) const {
  LvCommand out;
  const double n = c.velocity.norm();
  out.velocity = n > velocity_max ? Vec3(c.velocity * (velocity_max / n)) : c.velocity;
  out.yaw_rate = std::clamp(c.yaw_rate, -yaw_rate_max, yaw_rate_max);
  return out;
}

Command CommandLimits::clamp(const Command& c) const {
  return std::visit([this](const auto& cmd) -> Command { return clamp(cmd); }, c);
}

void CommandLimits::box(ActionSpace space, Vec4* center, Vec4* halfwidth) const {
  switch (space) {
    case ActionSpace::kSrt:
      *center = Vec4::Constant(srt_max / 2.0);
      *halfwidth = Vec4::Constant(srt_max / 2.0);
      break;
    case ActionSpace::kCtbr:
      *center << collective_max / 2.0, 0.0, 0.0, 0.0;
      *halfwidth << collective_max / 2.0, bodyrate_max.x(), bodyrate_max.y(), bodyrate_max.z();
      break;
    case ActionSpace::kLv:
      center->setZero();
      *halfwidth << velocity_max, velocity_max, velocity_max, yaw_rate_max;
      break;
  }
}

Vec4 command_to_vec(const Command& cmd) {
  if (const auto* srt = std::get_if<SrtCommand>(&cmd)) return srt->thrust;
  if (const auto* ctbr = std::get_if<CtbrCommand>(&cmd)) {
    return Vec4{ctbr->collective, ctbr->bodyrate.x(), ctbr->bodyrate.y(), ctbr->bodyrate.z()};
  }
  const auto& lv = std::get<LvCommand>(cmd);
  return Vec4{lv.velocity.x(), lv.velocity.y(), lv.velocity.z(), lv.yaw_rate};
}

Command vec_to_command(ActionSpace space, const Vec4& v) {
  switch (space) {
    case ActionSpace::kSrt:
      return SrtCommand{v};
    case ActionSpace::kCtbr:
      return CtbrCommand{v(0), Vec3{v(1), v(2), v(3)}};
    case ActionSpace::kLv:
      return LvCommand{Vec3{v(0), v(1), v(2)}, v(3)};
  }
  return SrtCommand{};
}

Command hover_command(ActionSpace space, const PhysParams& nominal) {
  switch (space) {
    case ActionSpace::kSrt:
      return SrtCommand{Vec4::Constant(nominal.hover_thrust_total() / 4.0)};
    case ActionSpace::kCtbr:
      return CtbrCommand{-nominal.gravity.z(), Vec3::Zero()};
    case ActionSpace::kLv:
      return LvCommand{Vec3::Zero(), 0.0};
  }
  return SrtCommand{};
}

LowLevelGains LowLevelGains::from_config(const Config& cfg) {
  LowLevelGains g;
  g.kp = cfg.get_vec3("llc.kp", g.kp);
  g.kd = cfg.get_vec3("llc.kd", g.kd);
  g.scale_p = cfg.get_double("llc.scale_p", g.scale_p);
  g.scale_d = cfg.get_double("llc.scale_d", g.scale_d);
  return g;
}

void LowLevelGains::to_config(Config& cfg) const {
  cfg.set_vec3("llc.kp", kp);
  cfg.set_vec3("llc.kd", kd);
  cfg.set_double("llc.scale_p", scale_p);
  cfg.set_double("llc.scale_d", scale_d);
}

Mixer::Mixer(const PhysParams& params) : f_max_(params.max_rotor_thrust) {
  // tau_z per unit thrust: the drag torque of a rotor producing thrust f is
  // spin * c_d * Omega^2 = spin * (c_d / c_l) * f.
  const double kappa = params.drag_torque_coeff / params.thrust_coeff;
  for (int i = 0; i < 4; ++i) {
    mix_(0, i) = 1.0;
    mix_(1, i) = params.rotor_pos[i].y();
    mix_(2, i) = -params.rotor_pos[i].x();
    mix_(3, i) = kappa * params.rotor_spin[i];
  }
  mix_inv_ = mix_.inverse();
}

AllocationResult Mixer::allocate(double collective_thrust, const Vec3& tau_des) const {
  AllocationResult out;

  double total = collective_thrust;
  if (total < 0.0 || total > 4.0 * f_max_) {
    total = std::clamp(total, 0.0, 4.0 * f_max_);
    out.saturated = true;
  }

  Eigen::Vector4d wrench;
  wrench << total, tau_des.x(), tau_des.y(), tau_des.z();
  const Vec4 exact = mix_inv_ * wrench;
  if (exact.minCoeff() >= 0.0 && exact.maxCoeff() <= f_max_) {
    out.thrust = exact;
    return out;
  }

  // Saturated: keep the collective component (equal split) and scale the
  // torque component down uniformly until the box holds.
  out.saturated = true;
  const Vec4 f_coll = Vec4::Constant(total / 4.0);
  const Vec4 f_tau = exact - f_coll;
  double alpha = 1.0;
  for (int i = 0; i < 4; ++i) {
    if (f_tau(i) > 0.0) {
      alpha = std::min(alpha, (f_max_ - f_coll(i)) / f_tau(i));
    } else if (f_tau(i) < 0.0) {
      alpha = std::min(alpha, (0.0 - f_coll(i)) / f_tau(i));
    }
  }
  alpha = std::clamp(alpha, 0.0, 1.0);
  out.thrust = (f_coll + alpha * f_tau).cwiseMax(0.0).cwiseMin(f_max_);
  return out;
}

double Mixer::collective(const Vec4& thrust) const { return thrust.sum(); }

Vec3 Mixer::torque(const Vec4& thrust) const {
  const Eigen::Vector4d w = mix_ * thrust;
  return Vec3{w(1), w(2), w(3)};
}

double thrust_to_speed(double thrust, const PhysParams& params) {
  return std::sqrt(std::max(0.0, thrust) / params.thrust_coeff);
}

Vec4 thrust_to_speed(const Vec4& thrust, const PhysParams& params) {
  Vec4 out;
  for (int i = 0; i < 4; ++i) out(i) = thrust_to_speed(thrust(i), params);
  return out;
}

RateController::RateController(const LowLevelGains& gains, const PhysParams& nominal, double dt)
    : gains_(gains), nominal_(nominal), mixer_(nominal), dt_(dt) {}

void RateController::reset() { has_prev_ = false; }

SrtCommand RateController::step(const QuadState& x, const CtbrCommand& cmd) {
  Vec3 rate_deriv = Vec3::Zero();
  if (has_prev_) {
    rate_deriv = (x.bodyrate - prev_bodyrate_) / dt_;
  }
  prev_bodyrate_ = x.bodyrate;
  has_prev_ = true;

  const Vec3 accel_des = gains_.scale_p * gains_.kp.cwiseProduct(cmd.bodyrate - x.bodyrate) -
                         gains_.scale_d * gains_.kd.cwiseProduct(rate_deriv);
  const Vec3 tau_des = nominal_.inertia.cwiseProduct(accel_des);
  const double thrust = nominal_.mass * std::max(0.0, cmd.collective);
  const AllocationResult alloc = mixer_.allocate(thrust, tau_des);
  last_saturated_ = alloc.saturated;
  return SrtCommand{alloc.thrust};
}

LvStackGains LvStackGains::from_config(const Config& cfg) {
  LvStackGains g;
  g.velocity_p = cfg.get_double("lv.velocity_p", g.velocity_p);
  g.attitude_p = cfg.get_double("lv.attitude_p", g.attitude_p);
  return g;
}

void LvStackGains::to_config(Config& cfg) const {
  cfg.set_double("lv.velocity_p", velocity_p);
  cfg.set_double("lv.attitude_p", attitude_p);
}

VelocityController::VelocityController(const LvStackGains& gains, const CommandLimits& limits,
                                       const PhysParams& nominal, double dt)
    : gains_(gains), limits_(limits), gravity_(nominal.gravity), dt_(dt) {}

void VelocityController::reset(const QuadState& x) {
  yaw_target_ = yaw_of(x.attitude);
  attitude_target_ = x.attitude;
  initialized_ = true;
}

CtbrCommand VelocityController::step(const QuadState& x, const LvCommand& cmd_in) {
  if (!initialized_) reset(x);
  const LvCommand cmd = limits_.clamp(cmd_in);

  yaw_target_ += cmd.yaw_rate * dt_;
  const Vec3 a_des = gains_.velocity_p * (cmd.velocity - x.velocity) - gravity_;

  CtbrCommand out;
  out.collective = a_des.norm();

  constexpr double kMinThrust = 1e-6;
  if (out.collective > kMinThrust) {
    // Attitude target from the thrust direction and the integrated yaw.
    const Vec3 z_b = a_des / out.collective;
    const Vec3 x_c{std::cos(yaw_target_), std::sin(yaw_target_), 0.0};
    Vec3 y_b = z_b.cross(x_c);
    const double y_norm = y_b.norm();
    if (y_norm > 1e-9) {
      y_b /= y_norm;
      const Vec3 x_b = y_b.cross(z_b);
      Mat3 R;
      R.col(0) = x_b;
      R.col(1) = y_b;
      R.col(2) = z_b;
      attitude_target_ = rotmat_to_quat(R);
    }
    // else: thrust points along x_c (knife-edge); keep the last target.
  }
  // else: free-fall request; keep the last target.

  const Quat q_err = x.attitude.conjugate() * attitude_target_;
  const double sign = q_err.w >= 0.0 ? 1.0 : -1.0;
  Vec3 omega = 2.0 * gains_.attitude_p * sign * q_err.vec();
  // Yaw-rate feedforward, expressed in the body frame.
  omega += cmd.yaw_rate * quat_rotate_inverse(x.attitude, Vec3::UnitZ());

  out.bodyrate = omega;
  return limits_.clamp(out);
}

}  // namespace quadbench
