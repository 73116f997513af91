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

#include <deque>
#include <random>

#include "quadbench/actuation.hpp"
#include "quadbench/trajgen.hpp"

namespace quadbench {

// Gaussian measurement noise applied to the policy's view of the state.
// The simulator and the low-level controllers always see the true state.
struct NoiseSpec {
  double position_std{0.005};   // m
  double velocity_std{0.01};    // m/s
  double bodyrate_std{0.01};    // rad/s
  double attitude_std{0.3 * M_PI / 180.0};  // rad, rotation-angle std

  static NoiseSpec none() { return {0.0, 0.0, 0.0, 0.0}; }
  static NoiseSpec from_config(const Config& cfg);
  void to_config(Config& cfg) const;
};

// Uniform bounds of the start-state perturbation around the first
// reference point.
struct InitPerturbSpec {
  double position{0.2};                  // m, per axis
  double velocity{0.2};                  // m/s, per axis
  double attitude{10.0 * M_PI / 180.0};  // rad, rotation angle
  double bodyrate{0.2};                  // rad/s, per axis

  static InitPerturbSpec none() { return {0.0, 0.0, 0.0, 0.0}; }
  static InitPerturbSpec from_config(const Config& cfg);
  void to_config(Config& cfg) const;
};

// Diagonal weights of the quadratic step cost. The state error is ordered
// [position(3), attitude-matrix difference(9), velocity(3), bodyrate(3)].
struct RewardSpec {
  double q_position{0.1};
  double q_attitude{0.02};
  double q_velocity{0.002};
  double q_bodyrate{0.01};
  double r_action{0.001};
  double crash_penalty{500.0};

  static RewardSpec from_config(const Config& cfg);
  void to_config(Config& cfg) const;
};

struct EnvConfig {
  int history_len{10};    // H
  int reference_len{10};  // R
  double control_dt{0.02};
  double sim_dt{0.001};
  double latency{0.0};  // s, non-negative multiple of sim_dt
  bool randomize{true};
  bool include_action_history{true};
  bool privileged_gravity{true};  // 8-dim privileged block; false drops to 7
  ActionSpace action_space{ActionSpace::kCtbr};

  NoiseSpec noise{};
  InitPerturbSpec init_perturb{};
  RewardSpec reward{};
  RandomizationSpec randomization{};
  LowLevelGains llc_gains{};
  LvStackGains lv_gains{};

  int substeps() const { return static_cast<int>(std::round(control_dt / sim_dt)); }
  int latency_steps() const { return static_cast<int>(std::round(latency / sim_dt)); }

  static EnvConfig from_config(const Config& cfg);
  void to_config(Config& cfg) const;
};

// Observation layout (all entries normalized):
//   state block:  H x (z(1), v(3), R(9), omega(3))          = H x 16
//   action block: H x 4 raw box-relative actions (optional)
//   reference:    R x (p_ref - p (3), v_ref - v (3), R_ref(9), omega_ref(3))
//   privileged:   mass bias, inertia bias(3), drag(3) [, gravity-z bias]
struct Observation {
  Eigen::VectorXd actor;
  Eigen::VectorXd privileged;
};

int actor_obs_dim(const EnvConfig& cfg);
int privileged_obs_dim(const EnvConfig& cfg);

// Fixed normalization scales of the observation groups.
constexpr double kPosScale = 1.0 / 10.0;
constexpr double kVelScale = 1.0 / 20.0;
constexpr double kRateScale = 1.0 / 12.0;

struct StepInfo {
  QuadState state;
  Vec4 applied_thrust{Vec4::Zero()};  // N, last substep, post-allocation
  bool saturated{false};
  double position_error{0.0};  // m, against the reference at the new time
};

struct StepResult {
  Observation obs;
  double reward{0.0};
  bool done{false};
  bool crashed{false};
  StepInfo info;
};

// Step cost of tracking: negated quadratic forms in the state and action
// residuals plus the crash penalty.
double compute_reward(const QuadState& x, const ReferencePoint& ref, const Vec4& action,
                      const Vec4& action_ref, const RewardSpec& spec, bool crashed);

// The action reference corresponding to a trajectory point, in the flat
// 4-vector view of the given space.
Vec4 reference_action(const ReferencePoint& ref, ActionSpace space);

// Single-agent episode environment: 1 kHz physics under a fixed-rate
// control loop, with command latency, measurement noise, parameter
// randomization, and sliding-window observations.
class Environment {
 public:
  Environment(const EnvConfig& cfg, const PhysParams& nominal);

  Observation reset(const Trajectory& traj, uint64_t seed);
  StepResult step(const Command& action);

  bool done() const { return done_; }
  double time() const { return t_; }
  const QuadState& state() const { return state_; }
  const PhysParams& params() const { return params_; }
  const EnvConfig& config() const { return cfg_; }
  const Trajectory& trajectory() const { return *traj_; }
  const CommandLimits& limits() const { return limits_; }

 private:
  struct Snapshot {
    // The measured (noisy) state the policy sees, stored once so the same
    // measurement persists through the history window.
    Vec3 position;
    Vec3 velocity;
    Mat3 attitude;
    Vec3 bodyrate;
    Vec4 action;  // raw box-relative action taken after this measurement
  };

  void push_snapshot(const Vec4& action_raw);
  Observation build_observation() const;
  Command delayed(const Command& action);
  Vec4 to_rotor_speeds(const Command& cmd, bool* saturated, Vec4* applied_thrust);

  EnvConfig cfg_;
  PhysParams nominal_;
  PhysParams params_;
  CommandLimits limits_;
  RateController rate_;
  VelocityController lv_;
  const Trajectory* traj_{nullptr};
  QuadState state_;
  double t_{0.0};
  bool done_{true};
  std::mt19937_64 rng_;
  std::deque<Command> delay_line_;
  std::deque<Snapshot> history_;
};

}  // namespace quadbench
