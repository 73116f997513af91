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

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "quadbench/mpc.hpp"
#include "quadbench/policy.hpp"

namespace quadbench {

// Closed-loop command source. The harness feeds every controller the full
// context each control step; implementations pick what they consume (the
// policy reads the observation, the MPC the measured state, the
// feed-forward only the reference).
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string id() const = 0;
  virtual double control_dt() const = 0;
  virtual void reset() {}
  virtual Command command(const Observation& obs, const QuadState& state,
                          const Trajectory& traj, double t) = 0;
};

// Open-loop replay of the per-rotor trajectory feed-forward. Samples the
// reference at the middle of each hold interval and inverts the
// first-order motor lag so the rotor speeds track their reference. Runs
// at the physics rate by default.
class FeedForwardController : public Controller {
 public:
  explicit FeedForwardController(const PhysParams& params, double dt = 0.001);

  std::string id() const override { return "feedforward-srt"; }
  double control_dt() const override { return dt_; }
  Command command(const Observation& obs, const QuadState& state, const Trajectory& traj,
                  double t) override;

 private:
  PhysParams params_;
  double dt_;
};

// Commands zero thrust on all rotors; the ballistic-crash oracle.
class ZeroThrustController : public Controller {
 public:
  explicit ZeroThrustController(double dt = 0.01) : dt_(dt) {}

  std::string id() const override { return "zero-thrust"; }
  double control_dt() const override { return dt_; }
  Command command(const Observation&, const QuadState&, const Trajectory&, double) override {
    return SrtCommand{Vec4::Zero()};
  }

 private:
  double dt_;
};

// Receding-horizon baseline (SRT or CTBR output) at 100 Hz.
class MpcBaselineController : public Controller {
 public:
  MpcBaselineController(const MpcConfig& cfg, const PhysParams& nominal, double dt = 0.01);

  std::string id() const override;
  double control_dt() const override { return dt_; }
  void reset() override { mpc_.reset(); }
  Command command(const Observation& obs, const QuadState& state, const Trajectory& traj,
                  double t) override;
  const MpcDiagnostics& diagnostics() const { return mpc_.diagnostics(); }

 private:
  MpcController mpc_;
  double dt_;
};

// Deterministic policy rollout: commands the Gaussian mean. Runs at the
// control rate the policy was trained with.
class PolicyController : public Controller {
 public:
  explicit PolicyController(Policy policy, std::string id = "");

  std::string id() const override { return id_; }
  double control_dt() const override { return policy_.env_config().control_dt; }
  Command command(const Observation& obs, const QuadState& state, const Trajectory& traj,
                  double t) override;
  const Policy& policy() const { return policy_; }

 private:
  Policy policy_;
  std::string id_;
};

struct EpisodeStep {
  double t{0.0};       // time after the step
  QuadState state;     // true simulator state after the step
  Vec3 p_ref{Vec3::Zero()};
  Vec4 command{Vec4::Zero()};  // issued command, flat 4-vector view
  Vec4 thrust{Vec4::Zero()};   // applied rotor thrusts, post-allocation
  double reward{0.0};
  double pos_error{0.0};  // m
  bool saturated{false};
};

// One closed-loop episode sampled at the controller rate.
struct EpisodeLog {
  std::vector<EpisodeStep> steps;
  bool crashed{false};
  double end_time{0.0};  // episode end or crash time
  std::string error;     // controller exception text, empty otherwise

  // Run metadata copied from the environment configuration.
  double latency{0.0};
  double p_scale{1.0}, d_scale{1.0};
  int history_len{0}, reference_len{0};

  // Mean / max of the per-step position error, in centimeters, over steps
  // with t >= from_t. Crashed episodes report their pre-crash steps; the
  // tables render them as "crash" instead.
  double avg_error_cm(double from_t = 0.0) const;
  double max_error_cm(double from_t = 0.0) const;
};

void write_episode_csv(const std::string& path, const EpisodeLog& log);

struct BenchResult {
  std::string controller_id;
  std::string trajectory_id;
  uint64_t seed{0};
  bool crashed{false};
  double avg_error_cm{0.0};
  double max_error_cm{0.0};
  double post_ramp_error_cm{0.0};
  double end_time{0.0};
  double latency{0.0};
  double p_scale{1.0}, d_scale{1.0};
  int history_len{0}, reference_len{0};

  // The error cell of result tables: the average error, or "crash".
  std::string error_cell() const;
};

BenchResult summarize(const EpisodeLog& log, const std::string& controller_id,
                      const std::string& trajectory_id, uint64_t seed,
                      double post_ramp_from = 0.0);

void write_results_csv(const std::string& path, const std::vector<BenchResult>& rows);

// Runs one closed-loop episode: the environment is stepped at the
// controller's rate until the trajectory ends or the platform crashes. A
// controller exception terminates the episode as crashed-with-error.
// env_cfg.control_dt is overridden by the controller's rate.
EpisodeLog run_tracking(Controller& ctrl, const Trajectory& traj, EnvConfig env_cfg,
                        const PhysParams& nominal, uint64_t seed);

// Executes fn(0..jobs-1) on a small worker pool (threads <= 0 picks the
// hardware concurrency). Each job writes only its own output slot, so
// results are identical to a serial loop.
void run_parallel(int jobs, int threads, const std::function<void(int)>& fn);

using ControllerFactory = std::function<std::unique_ptr<Controller>()>;

// One tracking run per (latency, seed) pair; rows keep that order.
std::vector<BenchResult> latency_sweep(const ControllerFactory& make, const Trajectory& traj,
                                       const std::string& trajectory_id, EnvConfig base,
                                       const PhysParams& nominal,
                                       const std::vector<double>& latencies,
                                       const std::vector<uint64_t>& seeds, int threads = 0);

// 0-60 ms in 5 ms steps.
std::vector<double> default_latency_grid();

// Low-level-gain sensitivity grid over multiplicative (P, D) scales.
struct GainGrid {
  std::vector<double> p_scales, d_scales;
  // error_cm(i, j) is the clipped average error at (p_scales[i],
  // d_scales[j]); crashed cells sit at the clip value.
  Eigen::MatrixXd error_cm;
  Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic> crashed;
  double clip_cm{500.0};
};

GainGrid gain_sweep(const ControllerFactory& make, const Trajectory& traj, EnvConfig base,
                    const PhysParams& nominal, const std::vector<double>& p_scales,
                    const std::vector<double>& d_scales, uint64_t seed, double clip_m = 5.0,
                    int threads = 0);

// Eleven multiplicative scales spanning [0, 100], including 0 and 1.
std::vector<double> default_gain_scales();

// Wide-form grid CSV (one row per d scale, one column per p scale);
// crashed cells hold the string "crash".
void write_gain_grid_csv(const std::string& path, const GainGrid& grid);

// Deterministic policy evaluation over a trajectory set (round-robin).
struct EvalSummary {
  int episodes{0};
  int crashes{0};
  double mean_error_cm{0.0};  // over non-crashed episodes
  double max_error_cm{0.0};
  double crash_rate() const {
    return episodes == 0 ? 0.0 : static_cast<double>(crashes) / episodes;
  }
};

EvalSummary evaluate_policy(const Policy& policy, const std::vector<Trajectory>& trajs,
                            EnvConfig env_cfg, const PhysParams& nominal, int episodes,
                            uint64_t seed0);

// Train-and-evaluate cell of the observation-window ablations.
struct AblationCell {
  std::string axis;  // "H" or "R"
  int value{0};
  ActionSpace space{ActionSpace::kCtbr};
  double mean_error_cm{0.0};  // mean over seeds of the per-seed eval mean
  double std_error_cm{0.0};
  double crash_rate{0.0};  // pooled over seeds x episodes
  int seeds{0};
};

std::vector<AblationCell> ablation_batch(const std::string& axis, const std::vector<int>& values,
                                         EnvConfig base, const PhysParams& nominal,
                                         const std::vector<Trajectory>& train_trajs,
                                         const std::vector<Trajectory>& eval_trajs,
                                         const PpoConfig& budget, int num_seeds, uint64_t seed0,
                                         int eval_episodes, int hidden_width = 64);

void write_ablation_csv(const std::string& path, const std::vector<AblationCell>& cells);

}  // namespace quadbench
