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

#include <variant>

#include "quadbench/dynamics.hpp"
#include "quadbench/math.hpp"

namespace quadbench {

// The three command abstraction levels. SRT talks to the rotors directly,
// CTBR goes through the onboard rate loop, LV through the full cascaded
// stack (velocity -> attitude -> bodyrate -> thrusts).
struct SrtCommand {
  Vec4 thrust{Vec4::Zero()};  // N, per rotor
};

struct CtbrCommand {
  double collective{0.0};       // mass-normalized, m/s^2
  Vec3 bodyrate{Vec3::Zero()};  // rad/s, body frame
};

struct LvCommand {
  Vec3 velocity{Vec3::Zero()};  // m/s, world frame
  double yaw_rate{0.0};         // rad/s
};

using Command = std::variant<SrtCommand, CtbrCommand, LvCommand>;

enum class ActionSpace { kSrt, kCtbr, kLv };

ActionSpace action_space_from_string(const std::string& name);
std::string to_string(ActionSpace space);

// Every action space is 4-dimensional; these give the flat-vector view used
// by the reward, the policy output layer, and the logs.
Vec4 command_to_vec(const Command& cmd);
Command vec_to_command(ActionSpace space, const Vec4& v);

// The steady-hover command of the given space: per-rotor weight share,
// gravity-cancelling collective with zero rates, or zero velocity.
Command hover_command(ActionSpace space, const PhysParams& nominal);

// Box bounds each command type is clamped to before execution. Policies map
// their outputs into these boxes, so they double as the action scaling.
struct CommandLimits {
  double srt_max{8.0};            // N per rotor
  double collective_max{41.67};   // m/s^2
  Vec3 bodyrate_max{12.0, 12.0, 6.0};
  double velocity_max{20.0};
  double yaw_rate_max{6.0};

  static CommandLimits from_params(const PhysParams& nominal);
  static CommandLimits from_config(const Config& cfg, const PhysParams& nominal);
  void to_config(Config& cfg) const;

  SrtCommand clamp(const SrtCommand& c) const;
  CtbrCommand clamp(const CtbrCommand& c) const;
  LvCommand clamp(const LvCommand& c) const;
  Command clamp(const Command& c) const;

  // Axis-aligned box of the flat-vector view; policies map their raw output
  // onto it as center + halfwidth * raw.
  void box(ActionSpace space, Vec4* center, Vec4* halfwidth) const;
};

// PD gains of the onboard bodyrate loop. scale_p/scale_d are the sweep
// multipliers of the gain-sensitivity grid; (1, 1) is the nominal tuning.
struct LowLevelGains {
  Vec3 kp{20.0, 20.0, 8.0};     // 1/s
  Vec3 kd{0.4, 0.4, 0.15};      // s * 1/s
  double scale_p{1.0};
  double scale_d{1.0};

  static LowLevelGains from_config(const Config& cfg);
  void to_config(Config& cfg) const;
};

struct AllocationResult {
  Vec4 thrust{Vec4::Zero()};  // N, per rotor, inside [0, f_max]
  bool saturated{false};      // true when clamping altered the wrench
};

// Linear map between (collective thrust, body torques) and per-rotor
// thrusts, built from the rotor geometry and spin directions.
class Mixer {
 public:
  explicit Mixer(const PhysParams& params);

  // Inverts the mixing matrix. Out-of-box solutions are clamped with
  // collective priority: the torque contribution is scaled down uniformly
  // until all four thrusts fit, keeping the requested total thrust.
  AllocationResult allocate(double collective_thrust, const Vec3& tau_des) const;

  // Forward map, the exact inverse of allocate() in the unclamped region.
  double collective(const Vec4& thrust) const;
  Vec3 torque(const Vec4& thrust) const;

 private:
  Eigen::Matrix4d mix_;      // (T, tau_x, tau_y, tau_z) = mix * f
  Eigen::Matrix4d mix_inv_;
  double f_max_;
};

// Static thrust model inverse, f = c_l * Omega^2. Negative thrust clamps
// to zero rather than producing NaN.
double thrust_to_speed(double thrust, const PhysParams& params);
Vec4 thrust_to_speed(const Vec4& thrust, const PhysParams& params);

// Onboard bodyrate PD loop closing CTBR commands through the mixer at the
// simulation rate. Uses the *nominal* model: the controller never sees the
// randomized mass or inertia.
class RateController {
 public:
  RateController(const LowLevelGains& gains, const PhysParams& nominal, double dt);

  SrtCommand step(const QuadState& x, const CtbrCommand& cmd);
  void reset();

  const LowLevelGains& gains() const { return gains_; }
  bool last_saturated() const { return last_saturated_; }

 private:
  LowLevelGains gains_;
  PhysParams nominal_;
  Mixer mixer_;
  double dt_;
  Vec3 prev_bodyrate_{Vec3::Zero()};
  bool has_prev_{false};
  bool last_saturated_{false};
};

struct LvStackGains {
  double velocity_p{3.0};  // 1/s
  double attitude_p{8.0};  // 1/s

  static LvStackGains from_config(const Config& cfg);
  void to_config(Config& cfg) const;
};

// Cascaded velocity stack: acceleration demand from a velocity P law,
// thrust direction + integrated yaw to an attitude target, bodyrates from
// a quaternion-error P law. Output feeds the rate loop as CTBR.
class VelocityController {
 public:
  VelocityController(const LvStackGains& gains, const CommandLimits& limits,
                     const PhysParams& nominal, double dt);

  CtbrCommand step(const QuadState& x, const LvCommand& cmd);
  void reset(const QuadState& x);

 private:
  LvStackGains gains_;
  CommandLimits limits_;
  Vec3 gravity_;
  double dt_;
  double yaw_target_{0.0};
  bool initialized_{false};
  Quat attitude_target_{};  // kept as fallback near the free-fall singularity
};

}  // namespace quadbench
