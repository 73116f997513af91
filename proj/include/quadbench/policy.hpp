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
#include <random>
#include <string>
#include <vector>

#include "quadbench/env.hpp"

namespace quadbench {

// Fully-connected stack on column batches: tanh after every layer except
// an optionally linear last one. Parameters (weight, then bias, per
// layer) live in an external flat array so the optimizer and the
// checkpoint code can treat a whole network as one vector.
class Net {
 public:
  Net(std::vector<int> widths, bool linear_output);

  int param_count() const { return count_; }
  int in_dim() const { return widths_.front(); }
  int out_dim() const { return widths_.back(); }

  struct Cache {
    // acts[0] is the input; acts[i] the post-activation output of layer i.
    std::vector<Eigen::MatrixXd> acts;
  };

  Eigen::MatrixXd forward(const double* params, const Eigen::MatrixXd& x,
                          Cache* cache = nullptr) const;

  // Reverse pass: dy is the loss gradient at the output; parameter
  // gradients accumulate into grad; the return value is the loss gradient
  // at the input.
  Eigen::MatrixXd backward(const double* params, const Cache& cache,
                           const Eigen::MatrixXd& dy, double* grad) const;

  // Orthogonal initialization, gain per hidden layer and for the output.
  void init(double* params, std::mt19937_64& rng, double hidden_gain,
            double output_gain) const;

  const std::vector<int>& widths() const { return widths_; }
  bool linear_output() const { return linear_output_; }

 private:
  std::vector<int> widths_;
  std::vector<int> w_off_, b_off_;
  int count_{0};
  bool linear_output_;
};

struct PpoConfig {
  double gamma{0.98};
  double actor_lr{3e-4};
  double critic_lr{3e-4};
  double entropy_coef{1e-2};
  double clip_eps{0.2};
  double gae_lambda{0.95};
  double value_coef{0.5};
  double initial_log_std{-1.0};
  int rollout_steps{256};
  int num_agents{50};
  int epochs{10};
  int minibatch{4096};
  long total_steps{2000000};
  int checkpoint_every{10};

  static PpoConfig from_config(const Config& cfg);
  void to_config(Config& cfg) const;
};

// Actor-critic pair. Both networks share the same topology: a state
// encoder (3 x 64) over the history block, a reference encoder (3 x 64)
// over the reference window, and a 2 x 128 head on the concatenated
// codes. The critic appends the privileged block to its state input and
// outputs a scalar; the actor outputs the 4 action means plus a
// state-independent log-std and never sees privileged entries.
class Policy {
 public:
  // hidden_width scales the whole topology (encoders hidden_width wide,
  // head twice that); the default matches the trained configuration and
  // small values give cheap nets for finite-difference audits.
  Policy(const EnvConfig& env_cfg, const PhysParams& nominal, int hidden_width = 64);

  void init(uint64_t seed, double initial_log_std);

  // Zeroes the actor head's output weights and writes the command into its
  // bias, so the initial Gaussian mean equals this command for every
  // observation. Training from scratch starts stable instead of sampling
  // around the box center.
  void set_initial_mean(const Command& cmd);

  int state_dim() const { return state_dim_; }
  int ref_dim() const { return ref_dim_; }
  int priv_dim() const { return priv_dim_; }
  int hidden_width() const { return width_; }
  ActionSpace space() const { return space_; }

  // Raw-box mean (columns = batch): the Gaussian lives in the normalized
  // action box [-1, 1]^4.
  Eigen::MatrixXd actor_mean_raw(const Eigen::MatrixXd& obs) const;
  Vec4 log_std() const;

  // Command-space view: mean affine-mapped into the command box, std as
  // exp(log_std) in normalized box units.
  std::pair<Vec4, Vec4> actor_forward(const Eigen::VectorXd& obs) const;

  // Encoder codes of the actor, exposed so tests can audit that state and
  // reference entries flow through separate paths.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> actor_encodings(const Eigen::VectorXd& obs) const;

  Eigen::VectorXd value(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& priv) const;

  // Executable command from a raw Gaussian sample (clipped into the box).
  Command to_command(const Vec4& raw) const;
  Vec4 box_center() const { return center_; }
  Vec4 box_halfwidth() const { return halfwidth_; }

  Eigen::VectorXd& actor_params() { return actor_params_; }
  Eigen::VectorXd& critic_params() { return critic_params_; }
  const Eigen::VectorXd& actor_params() const { return actor_params_; }
  const Eigen::VectorXd& critic_params() const { return critic_params_; }

  const Net& actor_state_net() const { return a_state_; }
  const Net& actor_ref_net() const { return a_ref_; }
  const Net& actor_head_net() const { return a_head_; }
  const Net& critic_state_net() const { return c_state_; }
  const Net& critic_ref_net() const { return c_ref_; }
  const Net& critic_head_net() const { return c_head_; }
  int log_std_offset() const { return log_std_off_; }

  // Self-describing checkpoint: magic, JSON header (shapes, action box,
  // normalization scales, config hash), then the raw little-endian
  // parameter doubles. Loading reproduces forward passes bit for bit.
  void save(const std::string& path, const std::string& config_hash = "") const;
  static Policy load(const std::string& path);

  // The env knobs the topology was derived from (stored in checkpoints).
  const EnvConfig& env_config() const { return env_cfg_; }

 private:
  Policy() = default;
  void build();

  EnvConfig env_cfg_{};
  int state_dim_{0}, ref_dim_{0}, priv_dim_{0};
  int width_{64};
  ActionSpace space_{ActionSpace::kCtbr};
  Vec4 center_{Vec4::Zero()}, halfwidth_{Vec4::Ones()};

  Net a_state_{{1, 1}, false}, a_ref_{{1, 1}, false}, a_head_{{1, 1}, true};
  Net c_state_{{1, 1}, false}, c_ref_{{1, 1}, false}, c_head_{{1, 1}, true};
  int log_std_off_{0};
  Eigen::VectorXd actor_params_, critic_params_;
};

// One gradient evaluation of the clipped PPO objective on a minibatch.
struct Minibatch {
  Eigen::MatrixXd obs;      // actor observation, dim x B
  Eigen::MatrixXd priv;     // privileged block, dim x B
  Eigen::MatrixXd actions;  // raw Gaussian samples, 4 x B
  Eigen::VectorXd old_logp;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;
};

struct LossTerms {
  double total{0.0};
  double surrogate{0.0};
  double value{0.0};
  double entropy{0.0};
  bool finite{true};
  std::string bad_term;
};

LossTerms ppo_loss_grad(const Policy& policy, const Minibatch& mb, const PpoConfig& cfg,
                        Eigen::VectorXd* actor_grad, Eigen::VectorXd* critic_grad);

// Log-density of the diagonal Gaussian the actor defines at obs.
Eigen::VectorXd gaussian_log_prob(const Eigen::MatrixXd& mean, const Vec4& log_std,
                                  const Eigen::MatrixXd& actions);

// Standard generalized advantage estimation. values must hold one more
// entry than rewards (the bootstrap); a set done flag cuts the recursion
// and replaces the bootstrap with zero at that step.
void gae(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values,
         const std::vector<uint8_t>& dones, double gamma, double lambda,
         Eigen::VectorXd* advantages, Eigen::VectorXd* returns);

class Adam {
 public:
  Adam(int n, double lr);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_{0.9}, beta2_{0.999}, eps_{1e-8};
  long t_{0};
  Eigen::VectorXd m_, v_;
};

struct CurveRow {
  int iteration{0};
  long env_steps{0};
  double mean_return{0.0};
  double mean_pos_error_cm{0.0};
  double crash_rate{0.0};
};

void write_curve_csv(const std::string& path, const std::vector<CurveRow>& rows);

struct TrainResult {
  std::vector<CurveRow> curve;
  bool diverged{false};
  std::string divergence_reason;
  long env_steps{0};
  int best_iteration{0};
  double best_return{0.0};
};

// PPO training loop: parallel-agent rollouts on the simulator, GAE,
// clipped-objective updates with Adam. Fully determined by the seed.
// Non-finite losses or parameters abort the run and restore the last
// finite iterate. checkpoint_dir, when set, receives periodic and final
// checkpoints.
TrainResult train_ppo(Policy& policy, const PhysParams& nominal,
                      const std::vector<Trajectory>& trajs, const PpoConfig& cfg,
                      uint64_t seed,
                      const std::function<void(const CurveRow&)>& on_iteration = {},
                      const std::string& checkpoint_dir = "");

}  // namespace quadbench
