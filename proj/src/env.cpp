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

#include "quadbench/env.hpp"

#include <stdexcept>

namespace quadbench {

NoiseSpec NoiseSpec::from_config(const Config& cfg) {
  NoiseSpec s;
  s.position_std = cfg.get_double("env.noise.position_std", s.position_std);
  s.velocity_std = cfg.get_double("env.noise.velocity_std", s.velocity_std);
  s.bodyrate_std = cfg.get_double("env.noise.bodyrate_std", s.bodyrate_std);
  s.attitude_std = cfg.get_double("env.noise.attitude_std", s.attitude_std);
  return s;
}

void NoiseSpec::to_config(Config& cfg) const {
  cfg.set_double("env.noise.position_std", position_std);
  cfg.set_double("env.noise.velocity_std", velocity_std);
  cfg.set_double("env.noise.bodyrate_std", bodyrate_std);
  cfg.set_double("env.noise.attitude_std", attitude_std);
}

InitPerturbSpec InitPerturbSpec::from_config(const Config& cfg) {
  InitPerturbSpec s;
  s.position = cfg.get_double("env.init.position", s.position);
  s.velocity = cfg.get_double("env.init.velocity", s.velocity);
  s.attitude = cfg.get_double("env.init.attitude", s.attitude);
  s.bodyrate = cfg.get_double("env.init.bodyrate", s.bodyrate);
  return s;
}

void InitPerturbSpec::to_config(Config& cfg) const {
  cfg.set_double("env.init.position", position);
  cfg.set_double("env.init.velocity", velocity);
  cfg.set_double("env.init.attitude", attitude);
  cfg.set_double("env.init.bodyrate", bodyrate);
}

RewardSpec RewardSpec::from_config(const Config& cfg) {
  RewardSpec s;
  s.q_position = cfg.get_double("reward.q_position", s.q_position);
  s.q_attitude = cfg.get_double("reward.q_attitude", s.q_attitude);
  s.q_velocity = cfg.get_double("reward.q_velocity", s.q_velocity);
  s.q_bodyrate = cfg.get_double("reward.q_bodyrate", s.q_bodyrate);
  s.r_action = cfg.get_double("reward.r_action", s.r_action);
  s.crash_penalty = cfg.get_double("reward.crash_penalty", s.crash_penalty);
  return s;
}

void RewardSpec::to_config(Config& cfg) const {
  cfg.set_double("reward.q_position", q_position);
  cfg.set_double("reward.q_attitude", q_attitude);
  cfg.set_double("reward.q_velocity", q_velocity);
  cfg.set_double("reward.q_bodyrate", q_bodyrate);
  cfg.set_double("reward.r_action", r_action);
  cfg.set_double("reward.crash_penalty", crash_penalty);
}

EnvConfig EnvConfig::from_config(const Config& cfg) {
  EnvConfig c;
  c.history_len = cfg.get_int("env.history_len", c.history_len);
  c.reference_len = cfg.get_int("env.reference_len", c.reference_len);
  c.control_dt = cfg.get_double("env.control_dt", c.control_dt);
  c.sim_dt = cfg.get_double("env.sim_dt", c.sim_dt);
  c.latency = cfg.get_double("env.latency", c.latency);
  c.randomize = cfg.get_bool("env.randomize", c.randomize);
  c.include_action_history = cfg.get_bool("env.action_history", c.include_action_history);
  c.privileged_gravity = cfg.get_bool("env.privileged_gravity", c.privileged_gravity);
  c.action_space = action_space_from_string(
      cfg.get_str("env.action_space", to_string(c.action_space)));
  c.noise = NoiseSpec::from_config(cfg);
  c.init_perturb = InitPerturbSpec::from_config(cfg);
  c.reward = RewardSpec::from_config(cfg);
  c.randomization = RandomizationSpec::from_config(cfg);
  c.llc_gains = LowLevelGains::from_config(cfg);
  c.lv_gains = LvStackGains::from_config(cfg);

  if (c.history_len < 1 || c.reference_len < 1) {
    throw std::runtime_error("env: history_len and reference_len must be >= 1");
  }
  const double steps = c.latency / c.sim_dt;
  if (c.latency < 0.0 || std::abs(steps - std::round(steps)) > 1e-9) {
    throw std::runtime_error("env.latency must be a non-negative multiple of env.sim_dt");
  }
  return c;
}

void EnvConfig::to_config(Config& cfg) const {
  cfg.set_int("env.history_len", history_len);
  cfg.set_int("env.reference_len", reference_len);
  cfg.set_double("env.control_dt", control_dt);
  cfg.set_double("env.sim_dt", sim_dt);
  cfg.set_double("env.latency", latency);
  cfg.set_bool("env.randomize", randomize);
  cfg.set_bool("env.action_history", include_action_history);
  cfg.set_bool("env.privileged_gravity", privileged_gravity);
  cfg.set_str("env.action_space", to_string(action_space));
  noise.to_config(cfg);
  init_perturb.to_config(cfg);
  reward.to_config(cfg);
  randomization.to_config(cfg);
  llc_gains.to_config(cfg);
  lv_gains.to_config(cfg);
}

int actor_obs_dim(const EnvConfig& cfg) {
  const int per_state = 16 + (cfg.include_action_history ? 4 : 0);
  return cfg.history_len * per_state + cfg.reference_len * 18;
}

int privileged_obs_dim(const EnvConfig& cfg) { return cfg.privileged_gravity ? 8 : 7; }

double compute_reward(const QuadState& x, const ReferencePoint& ref, const Vec4& action,
                      const Vec4& action_ref, const RewardSpec& spec, bool crashed) {
  const Vec3 dp = x.position - ref.p;
  const Mat3 dR = quat_to_rotmat(x.attitude) - quat_to_rotmat(ref.q);
  const Vec3 dv = x.velocity - ref.v;
  const Vec3 dw = x.bodyrate - ref.omega;
  const Vec4 du = action - action_ref;

  double r = 0.0;
  r -= spec.q_position * dp.squaredNorm();
  r -= spec.q_attitude * dR.squaredNorm();
  r -= spec.q_velocity * dv.squaredNorm();
  r -= spec.q_bodyrate * dw.squaredNorm();
  r -= spec.r_action * du.squaredNorm();
  if (crashed) r -= spec.crash_penalty;
  return r;
}

Vec4 reference_action(const ReferencePoint& ref, ActionSpace space) {
  switch (space) {
    case ActionSpace::kSrt:
      return ref.u_srt;
    case ActionSpace::kCtbr:
      return Vec4{ref.collective, ref.omega.x(), ref.omega.y(), ref.omega.z()};
    case ActionSpace::kLv:
      return Vec4{ref.v.x(), ref.v.y(), ref.v.z(), ref.yaw_rate};
  }
  return Vec4::Zero();
}

Environment::Environment(const EnvConfig& cfg, const PhysParams& nominal)
    : cfg_(cfg),
      nominal_(nominal),
      params_(nominal),
      limits_(CommandLimits::from_params(nominal)),
      rate_(cfg.llc_gains, nominal, cfg.sim_dt),
      lv_(cfg.lv_gains, limits_, nominal, cfg.sim_dt) {}

Observation Environment::reset(const Trajectory& traj, uint64_t seed) {
  traj_ = &traj;
  rng_.seed(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  params_ = cfg_.randomize ? sample_params(nominal_, cfg_.randomization, rng_())
                           : nominal_;

  // Draws happen in a fixed statement order so resets are reproducible.
  auto draw3 = [&](auto& dist) {
    Vec3 v;
    v.x() = dist(rng_);
    v.y() = dist(rng_);
    v.z() = dist(rng_);
    return v;
  };

  const ReferencePoint& rp0 = traj.points().front();
  state_.position = rp0.p + cfg_.init_perturb.position * draw3(u);
  state_.velocity = rp0.v + cfg_.init_perturb.velocity * draw3(u);
  Vec3 axis = draw3(gauss);
  if (axis.norm() < 1e-12) axis = Vec3::UnitZ();
  state_.attitude =
      (rp0.q * Quat::from_axis_angle(axis.normalized(), cfg_.init_perturb.attitude * u(rng_)))
          .normalized();
  state_.bodyrate = rp0.omega + cfg_.init_perturb.bodyrate * draw3(u);
  state_.rotor_speed = thrust_to_speed(rp0.u_srt, params_);

  t_ = 0.0;
  done_ = false;
  rate_.reset();
  lv_.reset(state_);

  // Latency line primed with the reference action so the plant does not see
  // a command gap at the start.
  const Command u_ref0 = vec_to_command(cfg_.action_space, reference_action(rp0, cfg_.action_space));
  delay_line_.assign(cfg_.latency_steps(), u_ref0);

  // History primed by repeating the initial measurement and u_ref.
  Vec4 center, hw;
  limits_.box(cfg_.action_space, &center, &hw);
  const Vec4 raw0 = (reference_action(rp0, cfg_.action_space) - center).cwiseQuotient(hw);
  history_.clear();
  push_snapshot(raw0);
  while (static_cast<int>(history_.size()) < cfg_.history_len) {
    history_.push_back(history_.back());
  }
  return build_observation();
}

void Environment::push_snapshot(const Vec4& action_raw) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw3 = [&] {
    Vec3 v;
    v.x() = gauss(rng_);
    v.y() = gauss(rng_);
    v.z() = gauss(rng_);
    return v;
  };
  Snapshot s;
  s.position = state_.position + cfg_.noise.position_std * draw3();
  s.velocity = state_.velocity + cfg_.noise.velocity_std * draw3();
  s.bodyrate = state_.bodyrate + cfg_.noise.bodyrate_std * draw3();
  Vec3 axis = draw3();
  if (axis.norm() < 1e-12) axis = Vec3::UnitX();
  const double angle = cfg_.noise.attitude_std * gauss(rng_);
  s.attitude = quat_to_rotmat((state_.attitude * Quat::from_axis_angle(axis.normalized(), angle))
                                  .normalized());
  s.action = action_raw;

  history_.push_back(s);
  while (static_cast<int>(history_.size()) > cfg_.history_len) history_.pop_front();
}

Observation Environment::build_observation() const {
  Observation obs;
  obs.actor.resize(actor_obs_dim(cfg_));
  int at = 0;

  for (const Snapshot& s : history_) {
    obs.actor(at++) = s.position.z() * kPosScale;
    obs.actor.segment<3>(at) = s.velocity * kVelScale;
    at += 3;
    obs.actor.segment<9>(at) = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(s.attitude.data());
    at += 9;
    obs.actor.segment<3>(at) = s.bodyrate * kRateScale;
    at += 3;
  }
  if (cfg_.include_action_history) {
    for (const Snapshot& s : history_) {
      obs.actor.segment<4>(at) = s.action;
      at += 4;
    }
  }

  // Reference residuals are taken against the current measurement, not the
  // true state: the policy never sees absolute x/y position.
  const Snapshot& now = history_.back();
  for (int k = 1; k <= cfg_.reference_len; ++k) {
    const ReferencePoint rp = traj_->at(t_ + k * cfg_.control_dt);
    obs.actor.segment<3>(at) = (rp.p - now.position) * kPosScale;
    at += 3;
    obs.actor.segment<3>(at) = (rp.v - now.velocity) * kVelScale;
    at += 3;
    const Mat3 R_ref = quat_to_rotmat(rp.q);
    obs.actor.segment<9>(at) = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(R_ref.data());
    at += 9;
    obs.actor.segment<3>(at) = rp.omega * kRateScale;
    at += 3;
  }

  obs.privileged.resize(privileged_obs_dim(cfg_));
  obs.privileged(0) = params_.mass / nominal_.mass - 1.0;
  obs.privileged.segment<3>(1) = params_.inertia.cwiseQuotient(nominal_.inertia) - Vec3::Ones();
  obs.privileged.segment<3>(4) = params_.drag_coeff;
  if (cfg_.privileged_gravity) {
    obs.privileged(7) = params_.gravity.z() - nominal_.gravity.z();
  }
  return obs;
}

Vec4 Environment::to_rotor_speeds(const Command& cmd, bool* saturated, Vec4* applied_thrust) {
  SrtCommand srt;
  switch (cfg_.action_space) {
    case ActionSpace::kSrt: {
      const auto& raw = std::get<SrtCommand>(cmd);
      srt = limits_.clamp(raw);
      if ((srt.thrust - raw.thrust).cwiseAbs().maxCoeff() > 0.0) *saturated = true;
      break;
    }
    case ActionSpace::kCtbr: {
      srt = rate_.step(state_, limits_.clamp(std::get<CtbrCommand>(cmd)));
      if (rate_.last_saturated()) *saturated = true;
      break;
    }
    case ActionSpace::kLv: {
      const CtbrCommand ctbr = lv_.step(state_, std::get<LvCommand>(cmd));
      srt = rate_.step(state_, ctbr);
      if (rate_.last_saturated()) *saturated = true;
      break;
    }
  }
  *applied_thrust = srt.thrust;
  return thrust_to_speed(srt.thrust, nominal_);
}

Command Environment::delayed(const Command& action) {
  if (delay_line_.empty()) return action;
  delay_line_.push_back(action);
  Command out = delay_line_.front();
  delay_line_.pop_front();
  return out;
}

StepResult Environment::step(const Command& action) {
  if (done_) throw std::runtime_error("environment: step() after episode end");
  if (action.index() != static_cast<size_t>(cfg_.action_space)) {
    throw std::runtime_error("environment: action variant does not match the configured space");
  }

  const Command issued = limits_.clamp(action);
  const Vec4 action_ref = reference_action(traj_->at(t_), cfg_.action_space);

  StepResult result;
  if ((command_to_vec(issued) - command_to_vec(action)).cwiseAbs().maxCoeff() > 0.0) {
    result.info.saturated = true;
  }
  bool crashed = false;
  for (int k = 0; k < cfg_.substeps(); ++k) {
    const Command cmd = delayed(issued);
    const Vec4 speeds = to_rotor_speeds(cmd, &result.info.saturated, &result.info.applied_thrust);
    state_ = step_symplectic_euler(state_, params_, speeds, cfg_.sim_dt);
    t_ += cfg_.sim_dt;
    if (state_.position.z() <= 0.0) {
      crashed = true;
      break;
    }
  }

  const ReferencePoint ref_now = traj_->at(t_);
  result.reward = compute_reward(state_, ref_now, command_to_vec(issued), action_ref,
                                 cfg_.reward, crashed);
  result.crashed = crashed;
  done_ = crashed || t_ >= traj_->duration() - 1e-9;
  result.done = done_;
  result.info.state = state_;
  result.info.position_error = (state_.position - ref_now.p).norm();

  Vec4 center, hw;
  limits_.box(cfg_.action_space, &center, &hw);
  push_snapshot((command_to_vec(issued) - center).cwiseQuotient(hw));
  result.obs = build_observation();
  return result;
}

}  // namespace quadbench
