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

#include <algorithm>
#include <stdexcept>

namespace quadbench {

namespace {

// Entries of the model state vector.
constexpr int kP = 0;   // position
constexpr int kQ = 3;   // quaternion, scalar first
constexpr int kV = 7;   // world velocity
constexpr int kW = 10;  // bodyrate

ModelVec model_derivative(const ModelVec& x, const Vec4& thrust, const PhysParams& p) {
  const Quat q{x(kQ), x(kQ + 1), x(kQ + 2), x(kQ + 3)};
  const Quat qn = q.normalized();
  const Vec3 v = x.segment<3>(kV);
  const Vec3 w = x.segment<3>(kW);

  Vec3 tau = Vec3::Zero();
  for (int i = 0; i < 4; ++i) {
    tau.x() += p.rotor_pos[i].y() * thrust(i);
    tau.y() -= p.rotor_pos[i].x() * thrust(i);
    tau.z() += p.rotor_spin[i] * (p.drag_torque_coeff / p.thrust_coeff) * thrust(i);
  }

  const Vec3 thrust_accel = quat_rotate(qn, Vec3{0.0, 0.0, thrust.sum()}) / p.mass;
  const Vec3 drag_accel =
      quat_rotate(qn, p.drag_coeff.cwiseProduct(quat_rotate_inverse(qn, v))) / p.mass;

  ModelVec dx;
  dx.segment<3>(kP) = v;
  const Quat qd = quat_derivative(q, w);
  dx(kQ) = qd.w;
  dx(kQ + 1) = qd.x;
  dx(kQ + 2) = qd.y;
  dx(kQ + 3) = qd.z;
  dx.segment<3>(kV) = p.gravity + thrust_accel - drag_accel;
  dx.segment<3>(kW) =
      (tau - w.cross(p.inertia.cwiseProduct(w))).cwiseQuotient(p.inertia);
  return dx;
}

// 12-entry tracking error [p, quaternion vector part, v, omega] with the
// reference sign-aligned to the state's quaternion hemisphere.
Eigen::Matrix<double, 12, 1> tracking_error(const ModelVec& x, const ReferencePoint& rp) {
  Eigen::Matrix<double, 12, 1> e;
  e.segment<3>(0) = x.segment<3>(kP) - rp.p;
  const Quat q{x(kQ), x(kQ + 1), x(kQ + 2), x(kQ + 3)};
  const double sign = q.dot(rp.q) >= 0.0 ? 1.0 : -1.0;
  e.segment<3>(3) = q.vec() - sign * rp.q.vec();
  e.segment<3>(6) = x.segment<3>(kV) - rp.v;
  e.segment<3>(9) = x.segment<3>(kW) - rp.omega;
  return e;
}

// Rows of the model state that enter the cost (all but the quaternion
// scalar, which is redundant on the unit sphere).
Eigen::Matrix<double, 12, Eigen::Dynamic> drop_scalar_row(
    const Eigen::Matrix<double, kModelDim, Eigen::Dynamic>& m) {
  static constexpr int kRows[12] = {0, 1, 2, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  Eigen::Matrix<double, 12, Eigen::Dynamic> out(12, m.cols());
  for (int i = 0; i < 12; ++i) out.row(i) = m.row(kRows[i]);
  return out;
}

}  // namespace

ModelVec model_state(const QuadState& x) {
  ModelVec m;
  m.segment<3>(kP) = x.position;
  m(kQ) = x.attitude.w;
  m(kQ + 1) = x.attitude.x;
  m(kQ + 2) = x.attitude.y;
  m(kQ + 3) = x.attitude.z;
  m.segment<3>(kV) = x.velocity;
  m.segment<3>(kW) = x.bodyrate;
  return m;
}

ModelVec model_state(const ReferencePoint& rp) {
  ModelVec m;
  m.segment<3>(kP) = rp.p;
  m(kQ) = rp.q.w;
  m(kQ + 1) = rp.q.x;
  m(kQ + 2) = rp.q.y;
  m(kQ + 3) = rp.q.z;
  m.segment<3>(kV) = rp.v;
  m.segment<3>(kW) = rp.omega;
  return m;
}

ModelVec model_rk4_step(const ModelVec& x, const Vec4& thrust, const PhysParams& params,
                        double dt) {
  if (dt == 0.0) return x;
  const ModelVec k1 = model_derivative(x, thrust, params);
  const ModelVec k2 = model_derivative(x + 0.5 * dt * k1, thrust, params);
  const ModelVec k3 = model_derivative(x + 0.5 * dt * k2, thrust, params);
  const ModelVec k4 = model_derivative(x + dt * k3, thrust, params);
  ModelVec out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  out.segment<4>(kQ).normalize();
  return out;
}

void model_linearize(const ModelVec& x, const Vec4& thrust, const PhysParams& params,
                     double dt, ModelMat* a, ModelInputMat* b) {
  // Cube root of machine epsilon balances truncation and rounding for
  // central differences.
  constexpr double kBase = 6.055454452393343e-06;
  for (int j = 0; j < kModelDim; ++j) {
    const double h = kBase * (1.0 + std::abs(x(j)));
    ModelVec xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    a->col(j) = (model_rk4_step(xp, thrust, params, dt) -
                 model_rk4_step(xm, thrust, params, dt)) /
                (2.0 * h);
  }
  for (int j = 0; j < 4; ++j) {
    const double h = kBase * (1.0 + std::abs(thrust(j)));
    Vec4 up = thrust, um = thrust;
    up(j) += h;
    um(j) -= h;
    b->col(j) =
        (model_rk4_step(x, up, params, dt) - model_rk4_step(x, um, params, dt)) / (2.0 * h);
  }
}

MpcConfig MpcConfig::from_config(const Config& cfg) {
  MpcConfig c;
  c.horizon_steps = cfg.get_int("mpc.horizon_steps", c.horizon_steps);
  c.horizon_time = cfg.get_double("mpc.horizon_time", c.horizon_time);
  c.q_position = cfg.get_double("mpc.q_position", c.q_position);
  c.q_attitude = cfg.get_double("mpc.q_attitude", c.q_attitude);
  c.q_velocity = cfg.get_double("mpc.q_velocity", c.q_velocity);
  c.q_bodyrate = cfg.get_double("mpc.q_bodyrate", c.q_bodyrate);
  c.r_input = cfg.get_double("mpc.r_input", c.r_input);
  c.u_min = cfg.get_double("mpc.u_min", c.u_min);
  c.u_max = cfg.get_double("mpc.u_max", c.u_max);
  c.control_dt = cfg.get_double("mpc.control_dt", c.control_dt);
  c.kkt_tol = cfg.get_double("mpc.kkt_tol", c.kkt_tol);
  c.max_qp_iters = cfg.get_int("mpc.max_qp_iters", c.max_qp_iters);
  c.variant = action_space_from_string(cfg.get_str("mpc.variant", to_string(c.variant)));
  if (c.horizon_steps < 1 || c.horizon_time <= 0.0) {
    throw std::runtime_error("mpc: horizon must have at least one step of positive length");
  }
  if (c.u_min < 0.0 || c.u_min >= c.u_max) {
    throw std::runtime_error("mpc: input bounds must satisfy 0 <= u_min < u_max");
  }
  if (c.variant == ActionSpace::kLv) {
    throw std::runtime_error("mpc: variant must be srt or ctbr");
  }
  return c;
}

void MpcConfig::to_config(Config& cfg) const {
  cfg.set_int("mpc.horizon_steps", horizon_steps);
  cfg.set_double("mpc.horizon_time", horizon_time);
  cfg.set_double("mpc.q_position", q_position);
  cfg.set_double("mpc.q_attitude", q_attitude);
  cfg.set_double("mpc.q_velocity", q_velocity);
  cfg.set_double("mpc.q_bodyrate", q_bodyrate);
  cfg.set_double("mpc.r_input", r_input);
  cfg.set_double("mpc.u_min", u_min);
  cfg.set_double("mpc.u_max", u_max);
  cfg.set_double("mpc.control_dt", control_dt);
  cfg.set_double("mpc.kkt_tol", kkt_tol);
  cfg.set_int("mpc.max_qp_iters", max_qp_iters);
  cfg.set_str("mpc.variant", to_string(variant));
}

BoxQpResult solve_box_qp(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& gradient,
                         const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                         double tol, int max_iters) {
  const int n = static_cast<int>(gradient.size());
  BoxQpResult res;
  res.x = Eigen::VectorXd::Zero(n).cwiseMax(lower).cwiseMin(upper);

  // status: 0 free, -1 clamped at the lower bound, +1 at the upper bound.
  std::vector<int> status(n, 0);
  for (int i = 0; i < n; ++i) {
    if (res.x(i) <= lower(i)) status[i] = -1;
    else if (res.x(i) >= upper(i)) status[i] = 1;
  }

  for (res.iterations = 0; res.iterations < max_iters; ++res.iterations) {
    std::vector<int> free;
    free.reserve(n);
    for (int i = 0; i < n; ++i) {
      if (status[i] == 0) free.push_back(i);
    }
    const int nf = static_cast<int>(free.size());

    // Minimize over the free variables with the active ones pinned.
    Eigen::VectorXd target = res.x;
    if (nf > 0) {
      Eigen::MatrixXd hff(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (int r = 0; r < nf; ++r) {
        double coupled = 0.0;
        for (int c = 0; c < n; ++c) {
          if (status[c] != 0) coupled += hessian(free[r], c) * res.x(c);
        }
        rhs(r) = -(gradient(free[r]) + coupled);
        for (int c = 0; c < nf; ++c) hff(r, c) = hessian(free[r], free[c]);
      }
      const Eigen::VectorXd xf = hff.ldlt().solve(rhs);
      for (int r = 0; r < nf; ++r) target(free[r]) = xf(r);
    }

    // Walk toward the subproblem minimizer until a bound blocks.
    double alpha = 1.0;
    int blocking = -1;
    int block_side = 0;
    for (int r = 0; r < nf; ++r) {
      const int i = free[r];
      const double d = target(i) - res.x(i);
      if (d > 0.0 && target(i) > upper(i)) {
        const double a = (upper(i) - res.x(i)) / d;
        if (a < alpha) {
          alpha = a;
          blocking = i;
          block_side = 1;
        }
      } else if (d < 0.0 && target(i) < lower(i)) {
        const double a = (lower(i) - res.x(i)) / d;
        if (a < alpha) {
          alpha = a;
          blocking = i;
          block_side = -1;
        }
      }
    }

    if (blocking >= 0) {
      res.x += alpha * (target - res.x);
      res.x(blocking) = block_side > 0 ? upper(blocking) : lower(blocking);
      status[blocking] = block_side;
      continue;
    }
    res.x = target;

    // KKT check: zero gradient on free variables, correctly signed
    // multipliers on the active ones.
    res.gradient = hessian * res.x + gradient;
    double worst = 0.0;
    int release = -1;
    for (int i = 0; i < n; ++i) {
      double viol = 0.0;
      if (status[i] == 0) {
        viol = std::abs(res.gradient(i));
      } else if (status[i] < 0) {
        viol = std::max(0.0, -res.gradient(i));
      } else {
        viol = std::max(0.0, res.gradient(i));
      }
      if (status[i] != 0 && viol > worst) {
        release = i;
      }
      worst = std::max(worst, viol);
    }
    res.kkt_residual = worst;
    if (worst <= tol) {
      res.converged = true;
      break;
    }
    if (release >= 0) {
      status[release] = 0;
    } else {
      // Free-gradient residual above tolerance: numerically stuck.
      break;
    }
  }

  res.gradient = hessian * res.x + gradient;
  res.active_count = 0;
  for (int i = 0; i < n; ++i) {
    if (status[i] != 0) ++res.active_count;
  }
  if (!res.converged) {
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      if (status[i] == 0) worst = std::max(worst, std::abs(res.gradient(i)));
      else if (status[i] < 0) worst = std::max(worst, -res.gradient(i));
      else worst = std::max(worst, res.gradient(i));
    }
    res.kkt_residual = worst;
  }
  return res;
}

MpcController::MpcController(const MpcConfig& cfg, const PhysParams& model)
    : cfg_(cfg), model_(model) {
  if (cfg_.variant == ActionSpace::kLv) {
    throw std::runtime_error("mpc: variant must be srt or ctbr");
  }
  sol_.inputs.assign(cfg_.horizon_steps, Vec4::Zero());
  sol_.states.assign(cfg_.horizon_steps + 1, ModelVec::Zero());
}

void MpcController::reset() {
  warm_ = false;
  diag_ = MpcDiagnostics{};
}

std::vector<ReferencePoint> MpcController::window(const Trajectory& traj, double t) const {
  std::vector<ReferencePoint> win(cfg_.horizon_steps + 1);
  for (int k = 0; k <= cfg_.horizon_steps; ++k) {
    win[k] = traj.at(t + k * cfg_.dt());
  }
  return win;
}

void MpcController::rollout(const ModelVec& x0) {
  sol_.states[0] = x0;
  for (int k = 0; k < cfg_.horizon_steps; ++k) {
    sol_.states[k + 1] = model_rk4_step(sol_.states[k], sol_.inputs[k], model_, cfg_.dt());
  }
}

const MpcController::Solution& MpcController::solve(const ModelVec& x0,
                                                    const std::vector<ReferencePoint>& window) {
  const int n = cfg_.horizon_steps;
  const double dt = cfg_.dt();
  if (static_cast<int>(window.size()) != n + 1) {
    throw std::runtime_error("mpc: reference window must hold horizon_steps + 1 points");
  }

  auto clamp_u = [&](const Vec4& u) {
    return u.cwiseMax(cfg_.u_min).cwiseMin(cfg_.u_max).eval();
  };

  if (!warm_) {
    for (int k = 0; k < n; ++k) sol_.inputs[k] = clamp_u(window[k].u_srt);
    warm_ = true;
    warm_time_ = window[0].t;
  } else {
    // Advance the warm start by however many whole shooting intervals have
    // elapsed since it was built (the re-solve rate is faster than 1/dt).
    int shift = static_cast<int>(std::round((window[0].t - warm_time_) / dt));
    shift = std::clamp(shift, 0, n);
    if (shift > 0) {
      for (int k = 0; k + shift < n; ++k) sol_.inputs[k] = sol_.inputs[k + shift];
      for (int k = std::max(0, n - shift); k < n; ++k) sol_.inputs[k] = sol_.inputs[n - 1];
      warm_time_ += shift * dt;
    }
  }

  // The shooting states are re-integrated from the measured state, so the
  // multiple-shooting equalities are satisfied exactly and condensing
  // leaves only the input corrections as QP variables.
  rollout(x0);

  Eigen::Matrix<double, 12, 1> stage_w;
  stage_w << Vec3::Constant(cfg_.q_position), Vec3::Constant(cfg_.q_attitude),
      Vec3::Constant(cfg_.q_velocity), Vec3::Constant(cfg_.q_bodyrate);

  const int nu = 4 * n;
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(nu, nu);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(nu);
  Eigen::Matrix<double, kModelDim, Eigen::Dynamic> sens =
      Eigen::Matrix<double, kModelDim, Eigen::Dynamic>::Zero(kModelDim, nu);

  ModelMat a;
  ModelInputMat b;
  for (int k = 0; k < n; ++k) {
    model_linearize(sol_.states[k], sol_.inputs[k], model_, dt, &a, &b);
    sens = (a * sens).eval();
    sens.block<kModelDim, 4>(0, 4 * k) = b;

    const Eigen::Matrix<double, 12, Eigen::Dynamic> rows = drop_scalar_row(sens);
    const Eigen::Matrix<double, 12, 1> err = tracking_error(sol_.states[k + 1], window[k + 1]);
    const Eigen::Matrix<double, 12, Eigen::Dynamic> weighted =
        stage_w.asDiagonal() * rows;
    hess.noalias() += rows.transpose() * weighted;
    grad.noalias() += rows.transpose() * (stage_w.cwiseProduct(err));
  }
  for (int k = 0; k < n; ++k) {
    hess.block<4, 4>(4 * k, 4 * k) += cfg_.r_input * Eigen::Matrix4d::Identity();
    grad.segment<4>(4 * k) += cfg_.r_input * (sol_.inputs[k] - window[k].u_srt);
  }

  Eigen::VectorXd lower(nu), upper(nu);
  for (int k = 0; k < n; ++k) {
    lower.segment<4>(4 * k) = Vec4::Constant(cfg_.u_min) - sol_.inputs[k];
    upper.segment<4>(4 * k) = Vec4::Constant(cfg_.u_max) - sol_.inputs[k];
  }

  qp_ = solve_box_qp(hess, grad, lower, upper, cfg_.kkt_tol, cfg_.max_qp_iters);

  diag_.kkt_residual = qp_.kkt_residual;
  diag_.qp_iterations = qp_.iterations;
  diag_.active_count = qp_.active_count;
  diag_.converged = qp_.converged;
  diag_.predicted_cost_change =
      0.5 * qp_.x.dot(hess * qp_.x) + grad.dot(qp_.x);
  ++diag_.solve_count;

  if (qp_.converged) {
    for (int k = 0; k < n; ++k) {
      sol_.inputs[k] = clamp_u(sol_.inputs[k] + qp_.x.segment<4>(4 * k));
    }
  }
  rollout(x0);
  return sol_;
}

Command MpcController::control(const QuadState& x, const Trajectory& traj, double t) {
  const std::vector<ReferencePoint> win = window(traj, t);
  solve(model_state(x), win);

  auto clamp_u = [&](const Vec4& u) {
    return u.cwiseMax(cfg_.u_min).cwiseMin(cfg_.u_max).eval();
  };

  Vec4 u0;
  Vec3 rate;
  if (diag_.converged) {
    u0 = sol_.inputs[0];
    rate = sol_.states[1].segment<3>(kW);
  } else {
    // Degrade to the reference feed-forward for this step.
    ++diag_.fallback_count;
    u0 = clamp_u(win[0].u_srt);
    rate = win[0].omega;
  }

  if (cfg_.variant == ActionSpace::kSrt) {
    return SrtCommand{u0};
  }
  CtbrCommand c;
  c.collective = u0.sum() / model_.mass;
  c.bodyrate = rate;
  return c;
}

}  // namespace quadbench
