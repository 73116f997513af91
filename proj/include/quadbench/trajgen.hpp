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

#include <memory>
#include <string>
#include <vector>

#include "quadbench/actuation.hpp"
#include "quadbench/dynamics.hpp"

namespace quadbench {

// Flat outputs of the platform: position and yaw with enough derivatives to
// reconstruct the full state reference.
struct FlatOutput {
  Vec3 p{Vec3::Zero()};
  Vec3 v{Vec3::Zero()};
  Vec3 a{Vec3::Zero()};
  Vec3 j{Vec3::Zero()};
  double yaw{0.0};
  double yaw_rate{0.0};
};

class FlatSignal {
 public:
  virtual ~FlatSignal() = default;
  virtual FlatOutput sample(double t) const = 0;
  virtual double duration() const = 0;
};

class HoverSignal : public FlatSignal {
 public:
  HoverSignal(const Vec3& position, double duration_s)
      : position_(position), duration_(duration_s) {}
  FlatOutput sample(double) const override {
    FlatOutput out;
    out.p = position_;
    return out;
  }
  double duration() const override { return duration_; }

 private:
  Vec3 position_;
  double duration_;
};

// Constant-speed circle in a plane tilted about the world x-axis, with a
// smooth speed ramp from standstill. ramp_time 0 starts directly on the
// steady circle (initial reference already carries the circular velocity).
class CircleSignal : public FlatSignal {
 public:
  CircleSignal(const Vec3& center, double radius, double inclination, double speed,
               double duration_s, double ramp_time, double accel_limit = 35.0);

  FlatOutput sample(double t) const override;
  double duration() const override { return duration_; }

 private:
  Vec3 center_;
  Mat3 tilt_;
  double radius_;
  double speed_;
  double duration_;
  double ramp_;
};

// Smooth periodic random position signal: a truncated harmonic series per
// axis whose per-harmonic variances follow the exponential-sine-squared
// kernel spectrum for the given length scale. Fully determined by the seed.
class EssRandomSignal : public FlatSignal {
 public:
  EssRandomSignal(int num_harmonics, double base_period, double amplitude, double length_scale,
                  uint64_t seed, const Vec3& center = Vec3{0.0, 0.0, 3.0},
                  double duration_s = 8.0);

  FlatOutput sample(double t) const override;
  double duration() const override { return duration_; }

  // Multiplies every harmonic amplitude; velocities and accelerations scale
  // by the same factor (used to retarget aggressiveness after measuring).
  void rescale(double factor);

 private:
  struct Harmonic {
    double amp;
    double omega;
    double phase;
  };
  std::array<std::vector<Harmonic>, 3> axes_;
  Vec3 center_;
  double duration_;
};

// Full-state reference sample. u_srt carries the per-rotor feed-forward
// thrusts; collective and yaw_rate are the CTBR/LV reference actions.
struct ReferencePoint {
  double t{0.0};
  Vec3 p{Vec3::Zero()};
  Vec3 v{Vec3::Zero()};
  Vec3 a{Vec3::Zero()};
  Quat q{};
  Vec3 omega{Vec3::Zero()};
  Vec4 u_srt{Vec4::Zero()};
  double collective{0.0};
  double yaw_rate{0.0};
};

// Maps flat outputs at time t to a full state + action reference: thrust
// direction from (a - g), attitude from thrust direction and yaw, bodyrates
// from jerk and yaw rate, and per-rotor thrusts from the allocated wrench
// including the rigid-body torque feed-forward. Throws on the free-fall
// singularity (thrust demand below epsilon).
ReferencePoint flatness_map(const FlatSignal& sig, const PhysParams& params, double t);

struct TrajMeta {
  double v_max{0.0};
  double c_max{0.0};
  double omega_max{0.0};
  uint64_t seed{0};
};

class Trajectory {
 public:
  static constexpr double kDt = 0.02;

  static Trajectory from_signal(const FlatSignal& sig, const PhysParams& params,
                                uint64_t seed = 0, double dt = kDt);

  const std::vector<ReferencePoint>& points() const { return points_; }
  double dt() const { return dt_; }
  double duration() const { return points_.empty() ? 0.0 : points_.back().t; }
  const TrajMeta& metadata() const { return meta_; }

  // Linear interpolation between samples (attitude by normalized lerp with
  // sign alignment); t clamps to the trajectory's span.
  ReferencePoint at(double t) const;

  void write_csv(const std::string& path) const;
  static Trajectory read_csv(const std::string& path);
  void write_meta(const std::string& path) const;

 private:
  std::vector<ReferencePoint> points_;
  double dt_{kDt};
  TrajMeta meta_{};
};

TrajMeta traj_metrics(const Trajectory& traj);

struct TrajLimits {
  double v_max{20.0};
  double a_max{35.0};
  double f_max{8.0};
};

struct Feasibility {
  bool ok{true};
  std::string violation;
};

Feasibility validate(const Trajectory& traj, const TrajLimits& limits);

// Generates the training corpus: a deterministic mix of circles and random
// harmonic trajectories stratified so the batch spans speeds up to 20 m/s
// and accelerations approaching 35 m/s^2. Every trajectory validates
// against the default limits.
std::vector<Trajectory> make_training_set(int count, uint64_t seed, const PhysParams& params);

// Named evaluation stand-ins, binned by aggressiveness: "hover",
// "circle_slow" (r=5, v=2), "circle_fast" (r=5, v=5), "random_slow",
// "random_fast", "race" (near the platform's velocity/thrust envelope).
Trajectory make_named_trajectory(const std::string& name, const PhysParams& params);
std::vector<std::string> named_trajectory_list();

}  // namespace quadbench
