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

#include "quadbench/mpc.hpp"

#include <random>

#include "doctest.h"
#include "quadbench/env.hpp"

using namespace quadbench;

namespace {

ModelVec hover_model_state(double z) {
  ModelVec x = ModelVec::Zero();
  x(2) = z;
  x(3) = 1.0;  // identity quaternion
  return x;
}

// A generic moving, rotating state used by the integration-accuracy tests.
ModelVec busy_state() {
  ModelVec x = ModelVec::Zero();
  x.segment<3>(0) = Vec3{0.3, -0.2, 2.0};
  const Quat q = Quat::from_axis_angle(Vec3{1.0, 2.0, -1.0}.normalized(), 0.25);
  x(3) = q.w;
  x(4) = q.x;
  x(5) = q.y;
  x(6) = q.z;
  x.segment<3>(7) = Vec3{1.0, -0.5, 0.3};
  x.segment<3>(10) = Vec3{0.4, -0.3, 0.6};
  return x;
}

}  // namespace

TEST_CASE("mpc: the hover state is a fixed point of the model step") {
  PhysParams p;
  const Vec4 u = Vec4::Constant(p.hover_thrust_total() / 4.0);
  const ModelVec x = hover_model_state(2.0);
  const ModelVec x1 = model_rk4_step(x, u, p, 0.05);
  CHECK((x1 - x).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("mpc: the model step matches the simulator once motors are instant") {
  PhysParams p;
  // Placing the motor pole exactly one simulator step away makes the
  // semi-implicit update deadbeat: the rotor speed equals the command from
  // the first step on, which removes the motor lag the model omits.
  p.motor_tau = 0.001;
  const double dt = 0.001;

  const Vec4 u = Vec4{1.7, 1.9, 2.0, 1.8};
  ModelVec xm = busy_state();
  QuadState xs;
  xs.position = xm.segment<3>(0);
  xs.attitude = Quat{xm(3), xm(4), xm(5), xm(6)};
  xs.velocity = xm.segment<3>(7);
  xs.bodyrate = xm.segment<3>(10);
  xs.rotor_speed = thrust_to_speed(u, p);
  const Vec4 speed_cmd = thrust_to_speed(u, p);

  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    xm = model_rk4_step(xm, u, p, dt);
    xs = step_symplectic_euler(xs, p, speed_cmd, dt);
    worst = std::max(worst, (xm - model_state(xs)).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-3);
}

TEST_CASE("mpc: halving the step cuts the integration error about sixteenfold") {
  PhysParams p;
  const Vec4 u = Vec4{1.7, 2.1, 2.0, 1.6};
  const ModelVec x = busy_state();
  const double h = 0.02;

  // Reference solution with a step small enough to be exact at this scale.
  ModelVec ref = x;
  const int fine = 2000;
  for (int k = 0; k < fine; ++k) ref = model_rk4_step(ref, u, p, h / fine);

  const ModelVec coarse = model_rk4_step(x, u, p, h);
  const ModelVec half = model_rk4_step(model_rk4_step(x, u, p, h / 2.0), u, p, h / 2.0);

  const double e1 = (coarse - ref).norm();
  const double e2 = (half - ref).norm();
  CHECK(e1 / e2 >= 14.0);
  CHECK(e1 / e2 <= 18.0);
}

TEST_CASE("mpc: finite-difference jacobians reproduce directional derivatives") {
  PhysParams p;
  const Vec4 u = Vec4{1.7, 2.1, 2.0, 1.6};
  const ModelVec x = busy_state();
  const double dt = 0.05;

  ModelMat a;
  ModelInputMat b;
  model_linearize(x, u, p, dt, &a, &b);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    ModelVec dx;
    Vec4 du;
    for (int i = 0; i < kModelDim; ++i) dx(i) = g(rng);
    for (int i = 0; i < 4; ++i) du(i) = g(rng);
    dx.normalize();
    du.normalize();

    const double eps = 1e-6;
    const ModelVec dir_x = (model_rk4_step(x + eps * dx, u, p, dt) -
                            model_rk4_step(x - eps * dx, u, p, dt)) /
                           (2.0 * eps);
    CHECK((a * dx - dir_x).norm() <= 1e-5 * std::max(1.0, dir_x.norm()));

    const ModelVec dir_u = (model_rk4_step(x, u + eps * du, p, dt) -
                            model_rk4_step(x, u - eps * du, p, dt)) /
                           (2.0 * eps);
    CHECK((b * du - dir_u).norm() <= 1e-5 * std::max(1.0, dir_u.norm()));
  }
}

TEST_CASE("mpc: the hover jacobian carries gravity-tilt and thrust terms") {
  PhysParams p;
  const double dt = 0.05;
  const Vec4 u = Vec4::Constant(p.hover_thrust_total() / 4.0);
  ModelMat a;
  ModelInputMat b;
  model_linearize(hover_model_state(2.0), u, p, dt, &a, &b);

  // Tilting by a quaternion component redirects the hover thrust: a small
  // q_y is half the pitch angle, so dv_x/dq_y is 2 g dt to leading order.
  CHECK(a(7, 5) == doctest::Approx(2.0 * 9.81 * dt).epsilon(0.02));
  CHECK(a(8, 4) == doctest::Approx(-2.0 * 9.81 * dt).epsilon(0.02));
  // Position rows integrate velocity.
  CHECK(a(0, 7) == doctest::Approx(dt).epsilon(0.02));

  // Every rotor contributes dt/m of vertical velocity per newton.
  for (int i = 0; i < 4; ++i) {
    CHECK(b(9, i) == doctest::Approx(dt / p.mass).epsilon(0.01));
  }

  // With dt = 0 the map is the identity.
  model_linearize(busy_state(), u, p, 0.0, &a, &b);
  CHECK((a - ModelMat::Identity()).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(b.cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("mpc: box qp solves a crafted problem with active bounds") {
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd g(2);
  g << -3.0, 0.5;
  Eigen::VectorXd lb = Eigen::VectorXd::Constant(2, -1.0);
  Eigen::VectorXd ub = Eigen::VectorXd::Constant(2, 1.0);

  const BoxQpResult r = solve_box_qp(h, g, lb, ub, 1e-8, 50);
  REQUIRE(r.converged);
  CHECK(r.x(0) == 1.0);  // unconstrained minimizer 3 clips to the bound
  CHECK(r.x(1) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(r.kkt_residual <= 1e-8);
  CHECK(r.active_count == 1);
  // Multiplier at the upper bound is -gradient and must be nonnegative.
  CHECK(-r.gradient(0) >= 0.0);

  // An interior problem leaves no active constraints.
  g << 0.1, -0.2;
  const BoxQpResult r2 = solve_box_qp(h, g, lb, ub, 1e-8, 50);
  REQUIRE(r2.converged);
  CHECK(r2.active_count == 0);
  CHECK((r2.x + g).norm() <= 1e-10);
}

TEST_CASE("mpc: solving on the reference returns the reference input") {
  PhysParams p;
  MpcConfig cfg;
  MpcController mpc(cfg, p);
  Trajectory traj = Trajectory::from_signal(HoverSignal(Vec3{0.0, 0.0, 2.0}, 4.0), p);

  const auto win = mpc.window(traj, 0.5);
  const auto& sol = mpc.solve(model_state(win[0]), win);
  REQUIRE(mpc.diagnostics().converged);
  const double u_hover = p.hover_thrust_total() / 4.0;
  for (int i = 0; i < 4; ++i) {
    CHECK(sol.inputs[0](i) == doctest::Approx(u_hover).epsilon(1e-6));
  }
  CHECK(mpc.diagnostics().kkt_residual <= 1e-8);
}

TEST_CASE("mpc: hover tracking emits hover commands in both variants") {
  PhysParams p;
  Trajectory traj = Trajectory::from_signal(HoverSignal(Vec3{0.0, 0.0, 2.0}, 4.0), p);
  QuadState x;
  x.position = Vec3{0.0, 0.0, 2.0};
  x.rotor_speed = Vec4::Constant(p.hover_rotor_speed());

  MpcConfig srt_cfg;
  srt_cfg.variant = ActionSpace::kSrt;
  MpcController srt(srt_cfg, p);
  const Command c1 = srt.control(x, traj, 0.0);
  const Vec4 u1 = std::get<SrtCommand>(c1).thrust;
  CHECK(u1.isApprox(Vec4::Constant(p.hover_thrust_total() / 4.0), 1e-5));

  MpcConfig ctbr_cfg;
  ctbr_cfg.variant = ActionSpace::kCtbr;
  MpcController ctbr(ctbr_cfg, p);
  const Command c2 = ctbr.control(x, traj, 0.0);
  const CtbrCommand cmd = std::get<CtbrCommand>(c2);
  CHECK(cmd.collective == doctest::Approx(9.81).epsilon(1e-5));
  CHECK(cmd.bodyrate.norm() <= 1e-5);
}

TEST_CASE("mpc: an unreachable reference saturates cleanly at the bounds") {
  PhysParams p;
  MpcConfig cfg;
  MpcController mpc(cfg, p);
  // Ten meters of altitude error wants far more than 8 N per rotor.
  Trajectory traj = Trajectory::from_signal(HoverSignal(Vec3{0.0, 0.0, 12.0}, 4.0), p);
  const auto win = mpc.window(traj, 0.0);
  const auto& sol = mpc.solve(hover_model_state(2.0), win);
  REQUIRE(mpc.diagnostics().converged);

  double top = 0.0;
  for (const Vec4& u : sol.inputs) {
    CHECK(u.maxCoeff() <= cfg.u_max);
    CHECK(u.minCoeff() >= cfg.u_min);
    top = std::max(top, u.maxCoeff());
  }
  CHECK(top == cfg.u_max);  // clamped exactly, not merely close

  // Multipliers of upper-active variables (-gradient) are nonnegative and
  // genuinely push against the bound somewhere.
  const BoxQpResult& qp = mpc.last_qp();
  CHECK(qp.active_count > 0);
  double strongest = 0.0;
  for (int i = 0; i < qp.x.size(); ++i) {
    if (qp.x(i) == qp.x.cwiseMax(0.0)(i) && qp.gradient(i) < 0.0) {
      strongest = std::max(strongest, -qp.gradient(i));
    }
  }
  CHECK(strongest > 1e-3);
}

TEST_CASE("mpc: tightening the kkt tolerance barely moves the control") {
  PhysParams p;
  Trajectory traj = Trajectory::from_signal(HoverSignal(Vec3{0.0, 0.0, 12.0}, 4.0), p);

  MpcConfig loose;
  loose.kkt_tol = 1e-6;
  MpcConfig tight;
  tight.kkt_tol = 1e-10;
  MpcController a(loose, p), b(tight, p);
  const auto& ua = a.solve(hover_model_state(2.0), a.window(traj, 0.0));
  const auto& ub = b.solve(hover_model_state(2.0), b.window(traj, 0.0));
  REQUIRE(a.diagnostics().converged);
  REQUIRE(b.diagnostics().converged);
  CHECK((ua.inputs[0] - ub.inputs[0]).cwiseAbs().maxCoeff() <= 1e-5);
}

TEST_CASE("mpc: repeated solves on a frozen problem reach a fixed point") {
  PhysParams p;
  MpcConfig cfg;
  MpcController mpc(cfg, p);
  Trajectory traj = Trajectory::from_signal(HoverSignal(Vec3{0.0, 0.0, 2.0}, 4.0), p);

  ModelVec x0 = hover_model_state(2.0);
  x0(0) += 0.3;  // off the reference so the first iterations do real work
  x0(9) -= 0.2;

  // Away from the reference the optimal residual is nonzero, so the
  // iteration contracts linearly; a couple dozen re-solves must land on a
  // fixed point where one more iteration changes nothing.
  const auto win = mpc.window(traj, 0.0);
  const int total = 25;
  Vec4 prev = Vec4::Zero();
  double first_change = 0.0;
  for (int i = 0; i < total; ++i) {
    const auto& sol = mpc.solve(x0, win);
    REQUIRE(mpc.diagnostics().converged);
    if (i == 1) first_change = (sol.inputs[0] - prev).cwiseAbs().maxCoeff();
    if (i == total - 1) {
      CHECK((sol.inputs[0] - prev).cwiseAbs().maxCoeff() <= 1e-8);
      CHECK(std::abs(mpc.diagnostics().predicted_cost_change) <= 1e-10);
      CHECK(first_change > 1e-5);  // the early iterations did real work
    }
    prev = sol.inputs[0];
  }
}

TEST_CASE("mpc: the qp step never raises the model cost") {
  PhysParams p;
  MpcConfig cfg;
  MpcController mpc(cfg, p);
  Trajectory traj = Trajectory::from_signal(HoverSignal(Vec3{0.0, 0.0, 2.0}, 4.0), p);
  const auto win = mpc.window(traj, 0.0);

  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 0.3);
  for (int trial = 0; trial < 20; ++trial) {
    ModelVec x0 = hover_model_state(2.0);
    x0(0) += g(rng);
    x0(1) += g(rng);
    x0(2) += g(rng);
    x0.segment<3>(7) += Vec3{g(rng), g(rng), g(rng)};
    mpc.reset();
    mpc.solve(x0, win);
    CHECK(mpc.diagnostics().predicted_cost_change <= 1e-12);
  }
}

TEST_CASE("mpc: an exhausted iteration budget degrades to feed-forward") {
  PhysParams p;
  MpcConfig cfg;
  cfg.max_qp_iters = 0;
  MpcController mpc(cfg, p);
  Trajectory traj = Trajectory::from_signal(HoverSignal(Vec3{0.0, 0.0, 2.0}, 4.0), p);

  QuadState x;
  x.position = Vec3{0.5, 0.0, 2.0};
  x.rotor_speed = Vec4::Constant(p.hover_rotor_speed());
  const Command c = mpc.control(x, traj, 0.0);
  CHECK_FALSE(mpc.diagnostics().converged);
  CHECK(mpc.diagnostics().fallback_count == 1);
  const Vec4 u = std::get<SrtCommand>(c).thrust;
  CHECK(u.isApprox(traj.points().front().u_srt, 1e-12));
}

TEST_CASE("mpc: config round trip and validation") {
  MpcConfig cfg;
  cfg.horizon_steps = 10;
  cfg.horizon_time = 0.8;
  cfg.q_position = 55.0;
  cfg.variant = ActionSpace::kCtbr;
  Config raw;
  cfg.to_config(raw);
  const MpcConfig back = MpcConfig::from_config(raw);
  CHECK(back.horizon_steps == 10);
  CHECK(back.dt() == doctest::Approx(0.08).epsilon(1e-12));
  CHECK(back.q_position == doctest::Approx(55.0).epsilon(1e-15));
  CHECK(back.variant == ActionSpace::kCtbr);

  Config bad;
  cfg.to_config(bad);
  bad.set_double("mpc.u_min", 9.0);
  CHECK_THROWS_AS(MpcConfig::from_config(bad), std::runtime_error);
  Config bad2;
  cfg.to_config(bad2);
  bad2.set_str("mpc.variant", "lv");
  CHECK_THROWS_AS(MpcConfig::from_config(bad2), std::runtime_error);
}

TEST_CASE("mpc: closed-loop circle tracking stays within five centimeters") {
  PhysParams p;
  // 100 Hz control over the full simulator, nominal parameters, no noise.
  EnvConfig ecfg;
  ecfg.action_space = ActionSpace::kSrt;
  ecfg.control_dt = 0.01;
  ecfg.randomize = false;
  ecfg.noise = NoiseSpec::none();
  ecfg.init_perturb = InitPerturbSpec::none();

  Trajectory traj = Trajectory::from_signal(
      CircleSignal(Vec3{0.0, 0.0, 3.0}, 5.0, 0.0, 5.0, 8.0, 2.0), p);

  Environment env(ecfg, p);
  env.reset(traj, 0);
  MpcConfig mcfg;
  mcfg.variant = ActionSpace::kSrt;
  MpcController mpc(mcfg, p);

  double err_sum = 0.0;
  long steps = 0;
  bool crashed = false;
  while (!env.done()) {
    const Command u = mpc.control(env.state(), traj, env.time());
    const StepResult r = env.step(u);
    err_sum += r.info.position_error;
    ++steps;
    crashed = r.crashed;
  }
  REQUIRE_FALSE(crashed);
  const double avg = err_sum / static_cast<double>(steps);
  CAPTURE(avg);
  CHECK(avg <= 0.05);
}
