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

#include "quadbench/bench.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace quadbench {

FeedForwardController::FeedForwardController(const PhysParams& params, double dt)
    : params_(params), dt_(dt) {
  if (dt <= 0.0) throw std::runtime_error("feedforward: control period must be positive");
}

Command FeedForwardController::command(const Observation&, const QuadState&,
                                       const Trajectory& traj, double t) {
  // Hold-interval midpoint, so the zero-order hold matches the reference
  // in the mean over the interval.
  const double tm = std::min(traj.duration(), t + 0.5 * dt_);
  const double h = 1e-3;
  const ReferencePoint rp = traj.at(tm);
  const ReferencePoint rp_next = traj.at(std::min(traj.duration(), tm + h));
  const Vec4 w_ref = thrust_to_speed(rp.u_srt, params_);
  const Vec4 w_next = thrust_to_speed(rp_next.u_srt, params_);
  const Vec4 w_cmd = w_ref + params_.motor_tau * (w_next - w_ref) / h;
  const Vec4 thrust =
      params_.thrust_coeff * w_cmd.cwiseMax(0.0).array().square().matrix();
  return SrtCommand{thrust.cwiseMin(params_.max_rotor_thrust)};
}

MpcBaselineController::MpcBaselineController(const MpcConfig& cfg, const PhysParams& nominal,
                                             double dt)
    : mpc_(cfg, nominal), dt_(dt) {
  if (dt <= 0.0) throw std::runtime_error("mpc controller: control period must be positive");
}

std::string MpcBaselineController::id() const {
  return "mpc-" + to_string(mpc_.config().variant);
}

Command MpcBaselineController::command(const Observation&, const QuadState& state,
                                       const Trajectory& traj, double t) {
  return mpc_.control(state, traj, t);
}

PolicyController::PolicyController(Policy policy, std::string id)
    : policy_(std::move(policy)),
      id_(id.empty() ? "policy-" + to_string(policy_.space()) : std::move(id)) {}

Command PolicyController::command(const Observation& obs, const QuadState&, const Trajectory&,
                                  double) {
  const Eigen::MatrixXd mean = policy_.actor_mean_raw(obs.actor);
  return policy_.to_command(mean.col(0));
}

double EpisodeLog::avg_error_cm(double from_t) const {
  double sum = 0.0;
  long n = 0;
  for (const EpisodeStep& s : steps) {
    if (s.t >= from_t) {
      sum += s.pos_error;
      ++n;
    }
  }
  return n == 0 ? 0.0 : 100.0 * sum / static_cast<double>(n);
}

double EpisodeLog::max_error_cm(double from_t) const {
  double worst = 0.0;
  for (const EpisodeStep& s : steps) {
    if (s.t >= from_t) worst = std::max(worst, s.pos_error);
  }
  return 100.0 * worst;
}

void write_episode_csv(const std::string& path, const EpisodeLog& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write episode log " + path);
  out << "t,px,py,pz,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz,"
         "rotor0,rotor1,rotor2,rotor3,ref_px,ref_py,ref_pz,"
         "cmd0,cmd1,cmd2,cmd3,thrust0,thrust1,thrust2,thrust3,"
         "reward,pos_error,saturated\n";
  for (const EpisodeStep& s : log.steps) {
    out << format_double(s.t);
    const double vals[] = {s.state.position.x(),  s.state.position.y(),
                           s.state.position.z(),  s.state.attitude.w,
                           s.state.attitude.x,    s.state.attitude.y,
                           s.state.attitude.z,    s.state.velocity.x(),
                           s.state.velocity.y(),  s.state.velocity.z(),
                           s.state.bodyrate.x(),  s.state.bodyrate.y(),
                           s.state.bodyrate.z(),  s.state.rotor_speed(0),
                           s.state.rotor_speed(1), s.state.rotor_speed(2),
                           s.state.rotor_speed(3), s.p_ref.x(),
                           s.p_ref.y(),           s.p_ref.z(),
                           s.command(0),          s.command(1),
                           s.command(2),          s.command(3),
                           s.thrust(0),           s.thrust(1),
                           s.thrust(2),           s.thrust(3),
                           s.reward,              s.pos_error};
    for (const double v : vals) out << ',' << format_double(v);
    out << ',' << (s.saturated ? 1 : 0) << '\n';
  }
}

std::string BenchResult::error_cell() const {
  return crashed ? "crash" : format_double(avg_error_cm);
}

BenchResult summarize(const EpisodeLog& log, const std::string& controller_id,
                      const std::string& trajectory_id, uint64_t seed, double post_ramp_from) {
  BenchResult r;
  r.controller_id = controller_id;
  r.trajectory_id = trajectory_id;
  r.seed = seed;
  r.crashed = log.crashed;
  r.avg_error_cm = log.avg_error_cm();
  r.max_error_cm = log.max_error_cm();
  r.post_ramp_error_cm = log.avg_error_cm(post_ramp_from);
  r.end_time = log.end_time;
  r.latency = log.latency;
  r.p_scale = log.p_scale;
  r.d_scale = log.d_scale;
  r.history_len = log.history_len;
  r.reference_len = log.reference_len;
  return r;
}

void write_results_csv(const std::string& path, const std::vector<BenchResult>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write results " + path);
  out << "controller,trajectory,seed,latency_ms,p_scale,d_scale,H,R,status,"
         "avg_error_cm,max_error_cm,post_ramp_error_cm,end_time_s\n";
  for (const BenchResult& r : rows) {
    out << r.controller_id << ',' << r.trajectory_id << ',' << r.seed << ','
        << format_double(1000.0 * r.latency) << ',' << format_double(r.p_scale) << ','
        << format_double(r.d_scale) << ',' << r.history_len << ',' << r.reference_len << ','
        << (r.crashed ? "crashed" : "completed") << ',';
    if (r.crashed) {
      out << "crash,crash,crash";
    } else {
      out << format_double(r.avg_error_cm) << ',' << format_double(r.max_error_cm) << ','
          << format_double(r.post_ramp_error_cm);
    }
    out << ',' << format_double(r.end_time) << '\n';
  }
}

EpisodeLog run_tracking(Controller& ctrl, const Trajectory& traj, EnvConfig env_cfg,
                        const PhysParams& nominal, uint64_t seed) {
  env_cfg.control_dt = ctrl.control_dt();
  Environment env(env_cfg, nominal);

  EpisodeLog log;
  log.latency = env_cfg.latency;
  log.p_scale = env_cfg.llc_gains.scale_p;
  log.d_scale = env_cfg.llc_gains.scale_d;
  log.history_len = env_cfg.history_len;
  log.reference_len = env_cfg.reference_len;

  Observation obs = env.reset(traj, seed);
  ctrl.reset();
  while (!env.done()) {
    Command cmd;
    try {
      cmd = ctrl.command(obs, env.state(), traj, env.time());
    } catch (const std::exception& e) {
      log.crashed = true;
      log.error = e.what();
      log.end_time = env.time();
      return log;
    }
    const StepResult sr = env.step(cmd);
    EpisodeStep row;
    row.t = env.time();
    row.state = sr.info.state;
    row.p_ref = traj.at(env.time()).p;
    row.command = command_to_vec(cmd);
    row.thrust = sr.info.applied_thrust;
    row.reward = sr.reward;
    row.pos_error = sr.info.position_error;
    row.saturated = sr.info.saturated;
    log.steps.push_back(row);
    obs = sr.obs;
    if (sr.done) {
      log.crashed = sr.crashed;
      break;
    }
  }
  log.end_time = env.time();
  return log;
}

void run_parallel(int jobs, int threads, const std::function<void(int)>& fn) {
  if (jobs <= 0) return;
  int n = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  n = std::max(1, std::min(n, jobs));
  if (n == 1) {
    for (int i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(n);
  for (int k = 0; k < n; ++k) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= jobs) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<double> default_latency_grid() {
  std::vector<double> grid;
  for (int ms = 0; ms <= 60; ms += 5) grid.push_back(1e-3 * ms);
  return grid;
}

std::vector<BenchResult> latency_sweep(const ControllerFactory& make, const Trajectory& traj,
                                       const std::string& trajectory_id, EnvConfig base,
                                       const PhysParams& nominal,
                                       const std::vector<double>& latencies,
                                       const std::vector<uint64_t>& seeds, int threads) {
  for (const double l : latencies) {
    const double steps = l / base.sim_dt;
    if (l < 0.0 || std::abs(steps - std::round(steps)) > 1e-9) {
      throw std::runtime_error("latency sweep: latencies must be non-negative multiples of sim dt");
    }
  }
  const int jobs = static_cast<int>(latencies.size() * seeds.size());
  std::vector<BenchResult> rows(jobs);
  run_parallel(jobs, threads, [&](int idx) {
    const size_t li = idx / seeds.size();
    const size_t si = idx % seeds.size();
    EnvConfig cfg = base;
    cfg.latency = latencies[li];
    const std::unique_ptr<Controller> ctrl = make();
    const EpisodeLog log = run_tracking(*ctrl, traj, cfg, nominal, seeds[si]);
    rows[idx] = summarize(log, ctrl->id(), trajectory_id, seeds[si]);
  });
  return rows;
}

std::vector<double> default_gain_scales() {
  return {0.0, 0.01, 0.05, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0, 100.0};
}

GainGrid gain_sweep(const ControllerFactory& make, const Trajectory& traj, EnvConfig base,
                    const PhysParams& nominal, const std::vector<double>& p_scales,
                    const std::vector<double>& d_scales, uint64_t seed, double clip_m,
                    int threads) {
  GainGrid grid;
  grid.p_scales = p_scales;
  grid.d_scales = d_scales;
  grid.clip_cm = 100.0 * clip_m;
  const int np = static_cast<int>(p_scales.size());
  const int nd = static_cast<int>(d_scales.size());
  grid.error_cm.resize(np, nd);
  grid.crashed.resize(np, nd);
  run_parallel(np * nd, threads, [&](int idx) {
    const int i = idx / nd;
    const int j = idx % nd;
    EnvConfig cfg = base;
    cfg.llc_gains.scale_p = p_scales[i];
    cfg.llc_gains.scale_d = d_scales[j];
    const std::unique_ptr<Controller> ctrl = make();
    const EpisodeLog log = run_tracking(*ctrl, traj, cfg, nominal, seed);
    grid.crashed(i, j) = log.crashed ? 1 : 0;
    grid.error_cm(i, j) =
        log.crashed ? grid.clip_cm : std::min(log.avg_error_cm(), grid.clip_cm);
  });
  return grid;
}

void write_gain_grid_csv(const std::string& path, const GainGrid& grid) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write gain grid " + path);
  out << "d_scale/p_scale";
  for (const double p : grid.p_scales) out << ',' << format_double(p);
  out << '\n';
  for (size_t j = 0; j < grid.d_scales.size(); ++j) {
    out << format_double(grid.d_scales[j]);
    for (size_t i = 0; i < grid.p_scales.size(); ++i) {
      out << ',';
      if (grid.crashed(static_cast<int>(i), static_cast<int>(j))) {
        out << "crash";
      } else {
        out << format_double(grid.error_cm(static_cast<int>(i), static_cast<int>(j)));
      }
    }
    out << '\n';
  }
}

EvalSummary evaluate_policy(const Policy& policy, const std::vector<Trajectory>& trajs,
                            EnvConfig env_cfg, const PhysParams& nominal, int episodes,
                            uint64_t seed0) {
  if (trajs.empty()) throw std::runtime_error("evaluate: empty trajectory set");
  // Observation shape and action space always follow the checkpoint.
  const EnvConfig& pc = policy.env_config();
  env_cfg.history_len = pc.history_len;
  env_cfg.reference_len = pc.reference_len;
  env_cfg.include_action_history = pc.include_action_history;
  env_cfg.privileged_gravity = pc.privileged_gravity;
  env_cfg.action_space = pc.action_space;

  PolicyController ctrl(policy);
  EvalSummary s;
  s.episodes = episodes;
  double sum = 0.0;
  int ok = 0;
  for (int i = 0; i < episodes; ++i) {
    const Trajectory& traj = trajs[i % trajs.size()];
    const EpisodeLog log = run_tracking(ctrl, traj, env_cfg, nominal, seed0 + i);
    if (log.crashed) {
      ++s.crashes;
    } else {
      sum += log.avg_error_cm();
      s.max_error_cm = std::max(s.max_error_cm, log.max_error_cm());
      ++ok;
    }
  }
  s.mean_error_cm = ok == 0 ? 0.0 : sum / ok;
  return s;
}

std::vector<AblationCell> ablation_batch(const std::string& axis, const std::vector<int>& values,
                                         EnvConfig base, const PhysParams& nominal,
                                         const std::vector<Trajectory>& train_trajs,
                                         const std::vector<Trajectory>& eval_trajs,
                                         const PpoConfig& budget, int num_seeds, uint64_t seed0,
                                         int eval_episodes, int hidden_width) {
  if (axis != "H" && axis != "R") throw std::runtime_error("ablation: axis must be H or R");
  if (num_seeds < 1 || eval_episodes < 1) {
    throw std::runtime_error("ablation: seeds and eval episodes must be >= 1");
  }

  // Evaluation runs in the nominal, noise-free simulator.
  EnvConfig eval_base = base;
  eval_base.randomize = false;
  eval_base.noise = NoiseSpec::none();
  eval_base.init_perturb = InitPerturbSpec::none();
  eval_base.latency = 0.0;

  std::vector<AblationCell> cells;
  for (const int value : values) {
    EnvConfig cfg = base;
    EnvConfig eval_cfg = eval_base;
    if (axis == "H") {
      cfg.history_len = value;
      eval_cfg.history_len = value;
    } else {
      cfg.reference_len = value;
      eval_cfg.reference_len = value;
    }

    std::vector<double> seed_means;
    int crashes = 0;
    for (int s = 0; s < num_seeds; ++s) {
      const uint64_t seed = seed0 + 1000ull * static_cast<uint64_t>(value) + s;
      Policy policy(cfg, nominal, hidden_width);
      policy.init(seed, budget.initial_log_std);
      policy.set_initial_mean(hover_command(cfg.action_space, nominal));
      train_ppo(policy, nominal, train_trajs, budget, seed);
      const EvalSummary summary =
          evaluate_policy(policy, eval_trajs, eval_cfg, nominal, eval_episodes, seed ^ 0xabcdu);
      crashes += summary.crashes;
      if (summary.crashes < summary.episodes) seed_means.push_back(summary.mean_error_cm);
    }

    AblationCell cell;
    cell.axis = axis;
    cell.value = value;
    cell.space = cfg.action_space;
    cell.seeds = num_seeds;
    cell.crash_rate =
        static_cast<double>(crashes) / static_cast<double>(num_seeds * eval_episodes);
    if (!seed_means.empty()) {
      double mean = 0.0;
      for (const double m : seed_means) mean += m;
      mean /= static_cast<double>(seed_means.size());
      double var = 0.0;
      for (const double m : seed_means) var += (m - mean) * (m - mean);
      cell.mean_error_cm = mean;
      cell.std_error_cm = seed_means.size() > 1
                              ? std::sqrt(var / static_cast<double>(seed_means.size() - 1))
                              : 0.0;
    }
    cells.push_back(cell);
  }
  return cells;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationCell>& cells) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write ablation table " + path);
  out << "axis,value,action_space,mean_error_cm,std_error_cm,crash_rate,seeds\n";
  for (const AblationCell& c : cells) {
    out << c.axis << ',' << c.value << ',' << to_string(c.space) << ',';
    if (c.crash_rate >= 1.0) {
      out << "crash,crash";
    } else {
      out << format_double(c.mean_error_cm) << ',' << format_double(c.std_error_cm);
    }
    out << ',' << format_double(c.crash_rate) << ',' << c.seeds << '\n';
  }
}

}  // namespace quadbench
