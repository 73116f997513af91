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

#include <random>

#include "doctest.h"

using namespace quadbench;

TEST_CASE("allocate hover and zero wrench") {
  const PhysParams p;
  const Mixer mixer(p);

  const AllocationResult zero = mixer.allocate(0.0, Vec3::Zero());
  CHECK(zero.thrust.norm() == doctest::Approx(0.0).epsilon(1e-14));
  CHECK_FALSE(zero.saturated);

  // m*g = 7.534 N split four ways.
  const AllocationResult hover = mixer.allocate(0.768 * 9.81, Vec3::Zero());
  CHECK_FALSE(hover.saturated);
  for (int i = 0; i < 4; ++i) {
    CHECK(hover.thrust(i) == doctest::Approx(1.88352).epsilon(1e-6));
  }
}

TEST_CASE("pure yaw torque alternates by spin sign and keeps the total") {
  const PhysParams p;
  const Mixer mixer(p);
  const double total = 6.0;
  const AllocationResult r = mixer.allocate(total, Vec3{0.0, 0.0, 0.01});
  CHECK_FALSE(r.saturated);
  CHECK(r.thrust.sum() == doctest::Approx(total).epsilon(1e-12));
  // +z torque comes from the rotors spinning with positive reaction sign.
  for (int i = 0; i < 4; ++i) {
    if (p.rotor_spin[i] > 0.0) {
      CHECK(r.thrust(i) > total / 4.0);
    } else {
      CHECK(r.thrust(i) < total / 4.0);
    }
  }
}

TEST_CASE("mixer round trip is exact when unclamped") {
  const PhysParams p;
  const Mixer mixer(p);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int i = 0; i < 500; ++i) {
    // Interior thrusts guarantee the inverse solution cannot hit the box.
    const Vec4 f{u(rng) * p.max_rotor_thrust, u(rng) * p.max_rotor_thrust,
                 u(rng) * p.max_rotor_thrust, u(rng) * p.max_rotor_thrust};
    const double T = mixer.collective(f);
    const Vec3 tau = mixer.torque(f);
    const AllocationResult r = mixer.allocate(T, tau);
    CHECK_FALSE(r.saturated);
    CHECK((r.thrust - f).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("allocation clamps with collective priority") {
  const PhysParams p;
  const Mixer mixer(p);

  // Torque demand far beyond the box: collective must survive, torque shrinks.
  const double total = 16.0;
  const AllocationResult r = mixer.allocate(total, Vec3{4.0, 0.0, 0.0});
  CHECK(r.saturated);
  CHECK(r.thrust.minCoeff() >= 0.0);
  CHECK(r.thrust.maxCoeff() <= p.max_rotor_thrust);
  CHECK(r.thrust.sum() == doctest::Approx(total).epsilon(1e-9));
  // The achieved torque still points the requested way.
  CHECK(mixer.torque(r.thrust).x() > 0.0);

  // Collective beyond 4*f_max cannot be preserved; it pins at the limit.
  const AllocationResult over = mixer.allocate(40.0, Vec3::Zero());
  CHECK(over.saturated);
  CHECK(over.thrust.sum() == doctest::Approx(4.0 * p.max_rotor_thrust));
}

TEST_CASE("thrust_to_speed inverts the static thrust model") {
  const PhysParams p;
  CHECK(thrust_to_speed(0.0, p) == 0.0);
  CHECK(thrust_to_speed(-1.0, p) == 0.0);
  CHECK(thrust_to_speed(1.88352, p) == doctest::Approx(1097.8).epsilon(1e-4));
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, p.max_rotor_thrust);
  for (int i = 0; i < 100; ++i) {
    const double f = u(rng);
    const double omega = thrust_to_speed(f, p);
    CHECK(p.thrust_coeff * omega * omega == doctest::Approx(f).epsilon(1e-12));
  }
}

TEST_CASE("rate loop at equilibrium commands hover thrusts") {
  const PhysParams p;
  RateController rate(LowLevelGains{}, p, 1e-3);
  QuadState x;
  x.rotor_speed.setConstant(p.hover_rotor_speed());

  const double g = -p.gravity.z();
  const SrtCommand out = rate.step(x, CtbrCommand{g, Vec3::Zero()});
  const double per_rotor = p.mass * g / 4.0;
  for (int i = 0; i < 4; ++i) {
    CHECK(out.thrust(i) == doctest::Approx(per_rotor).epsilon(1e-9));
  }
}

TEST_CASE("zero gain scales reduce the rate loop to open-loop collective") {
  const PhysParams p;
  LowLevelGains gains;
  gains.scale_p = 0.0;
  gains.scale_d = 0.0;
  RateController rate(gains, p, 1e-3);
  QuadState x;
  x.bodyrate = Vec3{3.0, -1.0, 2.0};  // large rate error that must be ignored
  const SrtCommand out = rate.step(x, CtbrCommand{5.0, Vec3::Zero()});
  const double per_rotor = p.mass * 5.0 / 4.0;
  for (int i = 0; i < 4; ++i) {
    CHECK(out.thrust(i) == doctest::Approx(per_rotor).epsilon(1e-12));
  }
}

TEST_CASE("positive roll-rate request loads the +y rotors") {
  const PhysParams p;
  RateController rate(LowLevelGains{}, p, 1e-3);
  QuadState x;
  x.rotor_speed.setConstant(p.hover_rotor_speed());
  const SrtCommand out = rate.step(x, CtbrCommand{9.81, Vec3{5.0, 0.0, 0.0}});
  for (int i = 0; i < 4; ++i) {
    if (p.rotor_pos[i].y() > 0.0) {
      CHECK(out.thrust(i) > 1.884);
    } else {
      CHECK(out.thrust(i) < 1.884);
    }
  }
}

TEST_CASE("roll-rate step settles within 0.15 s with low overshoot") {
  const PhysParams p;
  RateController rate(LowLevelGains{}, p, 1e-3);
  QuadState x;
  x.position = Vec3{0.0, 0.0, 5.0};
  x.rotor_speed.setConstant(p.hover_rotor_speed());

  const CtbrCommand cmd{-p.gravity.z(), Vec3{5.0, 0.0, 0.0}};
  double peak = 0.0;
  double last_outside = 0.0;  // last time |error| exceeded the 5% band
  const int steps = 400;
  for (int i = 0; i < steps; ++i) {
    const SrtCommand srt = rate.step(x, cmd);
    x = step_symplectic_euler(x, p, thrust_to_speed(srt.thrust, p), 1e-3);
    peak = std::max(peak, x.bodyrate.x());
    if (std::abs(x.bodyrate.x() - 5.0) > 0.25) last_outside = (i + 1) * 1e-3;
  }
  CHECK(std::abs(x.bodyrate.x() - 5.0) < 0.25);  // actually settled
  CHECK(last_outside <= 0.15);
  CHECK(peak <= 6.0);  // <= 20% overshoot
}

TEST_CASE("velocity stack at equilibrium asks for gravity compensation") {
  const PhysParams p;
  VelocityController lv(LvStackGains{}, CommandLimits::from_params(p), p, 1e-3);
  QuadState x;
  x.rotor_speed.setConstant(p.hover_rotor_speed());
  const CtbrCommand out = lv.step(x, LvCommand{Vec3::Zero(), 0.0});
  CHECK(out.collective == doctest::Approx(9.81).epsilon(1e-9));
  CHECK(out.bodyrate.norm() < 1e-9);
}

TEST_CASE("velocity error ahead tilts the target forward") {
  const PhysParams p;
  VelocityController lv(LvStackGains{}, CommandLimits::from_params(p), p, 1e-3);
  QuadState x;
  x.rotor_speed.setConstant(p.hover_rotor_speed());
  const CtbrCommand out = lv.step(x, LvCommand{Vec3{1.0, 0.0, 0.0}, 0.0});
  // a_des = (3, 0, 9.81): pitch forward, i.e. a +y body-rate demand.
  CHECK(out.bodyrate.y() > 0.1);
  CHECK(std::abs(out.bodyrate.x()) < 1e-9);
  CHECK(out.collective > 9.81);
}

TEST_CASE("pure yaw-rate command passes through at hover") {
  const PhysParams p;
  VelocityController lv(LvStackGains{}, CommandLimits::from_params(p), p, 1e-3);
  QuadState x;
  x.rotor_speed.setConstant(p.hover_rotor_speed());
  const CtbrCommand out = lv.step(x, LvCommand{Vec3::Zero(), 1.5});
  CHECK(out.collective == doctest::Approx(9.81).epsilon(1e-9));
  CHECK(out.bodyrate.z() == doctest::Approx(1.5).epsilon(0.02));
  CHECK(std::abs(out.bodyrate.x()) < 1e-6);
  CHECK(std::abs(out.bodyrate.y()) < 1e-6);
}

TEST_CASE("command limits clamp each space") {
  const PhysParams p;
  const CommandLimits lim = CommandLimits::from_params(p);
  CHECK(lim.collective_max == doctest::Approx(4.0 * 8.0 / 0.768));

  const SrtCommand srt = lim.clamp(SrtCommand{Vec4{-1.0, 9.0, 3.0, 8.0}});
  CHECK(srt.thrust(0) == 0.0);
  CHECK(srt.thrust(1) == 8.0);
  CHECK(srt.thrust(2) == 3.0);

  const CtbrCommand ctbr = lim.clamp(CtbrCommand{100.0, Vec3{20.0, -20.0, 1.0}});
  CHECK(ctbr.collective == lim.collective_max);
  CHECK(ctbr.bodyrate.x() == lim.bodyrate_max.x());
  CHECK(ctbr.bodyrate.y() == -lim.bodyrate_max.y());
  CHECK(ctbr.bodyrate.z() == 1.0);

  const LvCommand lv = lim.clamp(LvCommand{Vec3{30.0, 0.0, 0.0}, -10.0});
  CHECK(lv.velocity.norm() == doctest::Approx(lim.velocity_max));
  CHECK(lv.yaw_rate == -lim.yaw_rate_max);
}

TEST_CASE("action space names round trip") {
  for (ActionSpace s : {ActionSpace::kSrt, ActionSpace::kCtbr, ActionSpace::kLv}) {
    CHECK(action_space_from_string(to_string(s)) == s);
  }
  CHECK_THROWS(action_space_from_string("waypoint"));
}
