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

#include <vector>

#include "quadbench/actuation.hpp"
#include "quadbench/trajgen.hpp"

namespace quadbench {

// Prediction model state: position, attitude quaternion (w, x, y, z),
// world velocity, bodyrate. The motor lag is deliberately omitted; the
// inputs are the four rotor thrusts directly.
inline constexpr int kModelDim = 13;
using ModelVec = Eigen::Matrix<double, kModelDim, 1>;
using ModelMat = Eigen::Matrix<double, kModelDim, kModelDim>;
using ModelInputMat = Eigen::Matrix<double, kModelDim, 4>;

ModelVec model_state(const QuadState& x);
ModelVec model_state(const ReferencePoint& rp);

// Classical RK4 step of the 13-state model under constant rotor thrusts,
// with the quaternion renormalized afterwards.
ModelVec model_rk4_step(const ModelVec& x, const Vec4& thrust, const PhysParams& params,
                        double dt);

// Jacobians of the RK4 map by central finite differences with
// per-component scaled steps.
void model_linearize(const ModelVec& x, const Vec4& thrust, const PhysParams& params,
                     double dt, ModelMat* a, ModelInputMat* b);

struct MpcConfig {
  int horizon_steps{20};
  double horizon_time{1.0};  // s

  // Stage/terminal weights on the 12-entry error
  // [position(3), quaternion vector part(3), velocity(3), bodyrate(3)].
  double q_position{100.0};
  double q_attitude{10.0};
  double q_velocity{10.0};
  double q_bodyrate{1.0};
  double r_input{0.1};

  double u_min{0.0};  // N, per rotor
  double u_max{8.0};
  double control_dt{0.01};  // s, 100 Hz re-solve
  double kkt_tol{1e-8};
  int max_qp_iters{240};
  ActionSpace variant{ActionSpace::kSrt};  // kSrt or kCtbr output path

  double dt() const { return horizon_time / horizon_steps; }

  static MpcConfig from_config(const Config& cfg);
  void to_config(Config& cfg) const;
};

// Solution of  min 1/2 x'Hx + g'x  s.t.  lb <= x <= ub  by a primal
// active-set method. H must be positive definite. The gradient Hx + g at
// the solution doubles as the bound multipliers: at a lower bound the
// multiplier is +gradient, at an upper bound -gradient, both nonnegative
// at convergence (within the tolerance).
struct BoxQpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd gradient;
  double kkt_residual{0.0};
  int iterations{0};
  int active_count{0};
  bool converged{false};
};

BoxQpResult solve_box_qp(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& gradient,
                         const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                         double tol, int max_iters);

struct MpcDiagnostics {
  double kkt_residual{0.0};
  int qp_iterations{0};
  int active_count{0};
  bool converged{true};
  // Value of the quadratic cost model at the accepted step; never positive.
  double predicted_cost_change{0.0};
  long fallback_count{0};  // control() calls degraded to feed-forward
  long solve_count{0};
};

// Receding-horizon tracking controller: one SQP iteration per call
// (real-time iteration) on the multiple-shooting transcription of the
// model above, condensed to a box QP in the input corrections. The
// shooting trajectory is re-integrated from the measured state before
// every linearization, so the dynamics equalities hold exactly and only
// the input box constraints reach the QP.
class MpcController {
 public:
  struct Solution {
    std::vector<Vec4> inputs;      // N thrust vectors
    std::vector<ModelVec> states;  // N+1 predicted states
  };

  MpcController(const MpcConfig& cfg, const PhysParams& model);

  // Drops the warm start; the next solve cold-starts from u_ref.
  void reset();

  // Samples the N+1 reference window from the trajectory at t and runs one
  // real-time iteration. Emits rotor thrusts (SRT) or collective thrust
  // plus the first predicted bodyrate (CTBR). Falls back to the reference
  // feed-forward when the QP reports failure.
  Command control(const QuadState& x, const Trajectory& traj, double t);

  // One real-time iteration against an explicit window (N+1 points).
  const Solution& solve(const ModelVec& x0, const std::vector<ReferencePoint>& window);

  std::vector<ReferencePoint> window(const Trajectory& traj, double t) const;

  const MpcDiagnostics& diagnostics() const { return diag_; }
  const BoxQpResult& last_qp() const { return qp_; }
  const MpcConfig& config() const { return cfg_; }

 private:
  void rollout(const ModelVec& x0);

  MpcConfig cfg_;
  PhysParams model_;
  Solution sol_;
  MpcDiagnostics diag_;
  BoxQpResult qp_;
  bool warm_{false};
  double warm_time_{0.0};  // reference time the warm start is aligned to
};

}  // namespace quadbench
