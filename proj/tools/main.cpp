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

// Command-line front end of the benchmark: trajectory-set generation, PPO
// training, tracking evaluation, latency and gain sweeps, observation
// ablations, and figure rendering.
//
// Every subcommand writes its artifacts into a run directory together
// with manifest.json, which records the command, the fully resolved
// configuration, the seeds, and content hashes of all inputs. `rerun
// --manifest` re-executes any such manifest; with --strict-determinism
// the artifacts reproduce byte-for-byte.
//
// Configuration precedence: built-in defaults < --config file < flags
// (including generic --set key=value overrides). The resolved snapshot
// always lands in the manifest. The default output root is ./runs,
// overridable through the QUADBENCH_OUT environment variable.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "quadbench/bench.hpp"
#include "quadbench/config.hpp"
#include "quadbench/env.hpp"
#include "quadbench/mpc.hpp"
#include "quadbench/policy.hpp"
#include "quadbench/trajgen.hpp"
#include "svg_plot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace quadbench;

namespace {

std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Everything one executing subcommand accumulates for its manifest.
struct RunContext {
  Config cfg;
  fs::path dir;
  std::vector<uint64_t> seeds;
  std::map<std::string, std::string> inputs;  // absolute path -> content hash

  void note_input(const fs::path& path) {
    const fs::path abs = fs::absolute(path).lexically_normal();
    inputs[abs.string()] = content_hash(read_file_bytes(path));
  }

  uint64_t seed() const { return static_cast<uint64_t>(cfg.get_int("run.seed", 0)); }

  int threads() const {
    if (cfg.get_bool("run.strict_determinism", false)) return 1;
    return cfg.get_int("run.threads", 0);
  }
};

// The output directory is deliberately not part of the hashed config, so
// re-running a manifest into a fresh directory yields identical bytes.
void write_manifest(const RunContext& ctx) {
  json j;
  j["command"] = ctx.cfg.get_str("run.command", "");
  j["output_dir"] = fs::absolute(ctx.dir).lexically_normal().string();
  j["seeds"] = ctx.seeds;
  j["config"] = json::object();
  for (const auto& [key, value] : ctx.cfg.values()) j["config"][key] = value;
  j["config_hash"] = content_hash(ctx.cfg.to_string());
  j["inputs"] = json::object();
  for (const auto& [path, hash] : ctx.inputs) j["inputs"][path] = hash;

  const fs::path path = ctx.dir / "manifest.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::string output_root() {
  if (const char* env = std::getenv("QUADBENCH_OUT"); env && *env) return env;
  return "runs";
}

fs::path prepare_run_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) {
      throw std::runtime_error("run.out: '" + dir.string() + "' exists and is not a directory");
    }
    if (!fs::is_empty(dir) && !force) {
      throw std::runtime_error("run.out: directory '" + dir.string() +
                               "' is not empty (pass --force to write into it)");
    }
  } else {
    fs::create_directories(dir);
  }
  return dir;
}

// Built-in defaults for every module the subcommand can touch. The
// evaluation-style commands default to the quiet nominal simulator;
// training keeps randomization and noise on.
Config default_config(const std::string& command) {
  Config cfg;
  PhysParams{}.to_config(cfg);
  EnvConfig{}.to_config(cfg);
  MpcConfig{}.to_config(cfg);
  PpoConfig{}.to_config(cfg);
  cfg.set_str("run.command", command);
  cfg.set_int("run.seed", 0);
  cfg.set_int("run.threads", 0);
  cfg.set_bool("run.strict_determinism", false);

  const bool evaluation = command == "eval" || command == "sweep-latency" ||
                          command == "sweep-gains";
  if (evaluation) {
    cfg.set_bool("env.randomize", false);
    for (const char* key : {"env.noise.position_std", "env.noise.velocity_std",
                            "env.noise.bodyrate_std", "env.noise.attitude_std",
                            "env.init.position", "env.init.velocity", "env.init.attitude",
                            "env.init.bodyrate"}) {
      cfg.set_double(key, 0.0);
    }
  }
  return cfg;
}

void apply_set_overrides(Config& cfg, const std::vector<std::string>& sets) {
  for (const std::string& kv : sets) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw std::runtime_error("run.set: expected key=value, got '" + kv + "'");
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
}

// Rewrites tokens that name existing files or directories to absolute
// paths, so the manifest re-runs from any working directory.
std::string absolutize_paths(const std::string& spec) {
  std::vector<std::string> tokens = split(spec, ',');
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (fs::exists(tokens[i])) {
      tokens[i] = fs::absolute(tokens[i]).lexically_normal().string();
    }
    if (i) out += ',';
    out += tokens[i];
  }
  return out;
}

struct NamedTraj {
  std::string id;
  Trajectory traj;
};

// A trajectory set spec is a comma-separated list of named trajectories,
// CSV files, or directories of CSV files.
std::vector<NamedTraj> resolve_traj_set(const std::string& spec, const std::string& key,
                                        const PhysParams& params, RunContext* ctx) {
  if (spec.empty()) throw std::runtime_error(key + ": no trajectories given");
  std::vector<NamedTraj> out;
  const std::vector<std::string> names = named_trajectory_list();
  for (const std::string& token : split(spec, ',')) {
    const fs::path p(token);
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(p)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv" &&
            entry.path().filename() != "metadata.csv") {
          files.push_back(entry.path());
        }
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) {
        throw std::runtime_error(key + ": directory '" + token +
                                 "' contains no trajectory CSVs");
      }
      for (const fs::path& f : files) {
        if (ctx) ctx->note_input(f);
        out.push_back({f.stem().string(), Trajectory::read_csv(f.string())});
      }
    } else if (fs::exists(p)) {
      if (ctx) ctx->note_input(p);
      out.push_back({p.stem().string(), Trajectory::read_csv(token)});
    } else if (std::find(names.begin(), names.end(), token) != names.end()) {
      out.push_back({token, make_named_trajectory(token, params)});
    } else {
      std::string known;
      for (const std::string& n : names) known += (known.empty() ? "" : ", ") + n;
      throw std::runtime_error(key + ": unknown trajectory '" + token +
                               "' and no such file (named trajectories: " + known + ")");
    }
  }
  return out;
}

// Reads the JSON header of a policy checkpoint without loading the
// parameter payload.
json checkpoint_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("run.controller: cannot open checkpoint " + path.string());
  }
  std::string magic(8, '\0');
  in.read(magic.data(), 8);
  if (!in || magic != "QBCKPT1\n") {
    throw std::runtime_error("run.controller: " + path.string() +
                             " is not a policy checkpoint");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) {
    throw std::runtime_error("run.controller: truncated checkpoint " + path.string());
  }
  return json::parse(header);
}

struct ControllerSetup {
  ControllerFactory make;
  std::string id;
};

// Builds the controller factory named by run.controller: an MPC variant,
// the open-loop baselines, or a policy checkpoint. The controller
// dictates the environment's action space, the control rate, and (for
// checkpoints) the observation layout, so those fields of `env` are
// overridden to match; the caller snapshots the result back into the
// manifest config.
ControllerSetup make_controller(const Config& cfg, const PhysParams& nominal, EnvConfig* env,
                                RunContext* ctx) {
  const std::string name = cfg.get_str("run.controller", "");
  if (name == "mpc-srt" || name == "mpc-ctbr") {
    MpcConfig mc = MpcConfig::from_config(cfg);
    mc.variant = name == "mpc-srt" ? ActionSpace::kSrt : ActionSpace::kCtbr;
    env->action_space = mc.variant;
    env->control_dt = mc.control_dt;
    return {[mc, nominal] { return std::make_unique<MpcBaselineController>(mc, nominal); },
            name};
  }
  if (name == "feedforward") {
    env->action_space = ActionSpace::kSrt;
    env->control_dt = env->sim_dt;  // open-loop replay at the physics rate
    const double dt = env->sim_dt;
    return {[nominal, dt] { return std::make_unique<FeedForwardController>(nominal, dt); },
            "feedforward-srt"};
  }
  if (name == "zero-thrust") {
    env->action_space = ActionSpace::kSrt;
    env->control_dt = ZeroThrustController{}.control_dt();
    return {[] { return std::make_unique<ZeroThrustController>(); }, "zero-thrust"};
  }
  const fs::path path(name);
  if (!fs::exists(path)) {
    throw std::runtime_error(
        "run.controller: unknown controller '" + name +
        "' (expected mpc-srt, mpc-ctbr, feedforward, zero-thrust, or a checkpoint file)");
  }
  if (ctx) ctx->note_input(path);

  const json header = checkpoint_header(path);
  const std::string stored_hash = header.value("config_hash", "");
  const std::string expected = cfg.get_str("run.expect_config_hash", "");
  if (!expected.empty() && expected != stored_hash) {
    throw std::runtime_error("config_hash: checkpoint " + name + " carries '" + stored_hash +
                             "' but --expect-config-hash requires '" + expected + "'");
  }
  if (cfg.has("run.action_space")) {
    const std::string requested = cfg.get_str("run.action_space", "");
    const std::string trained = header.value("action_space", "");
    if (requested != trained) {
      throw std::runtime_error("env.action_space: checkpoint " + name +
                               " was trained for '" + trained + "' but '" + requested +
                               "' was requested");
    }
  }

  auto policy = std::make_shared<Policy>(Policy::load(name));
  if (env) {
    const EnvConfig& trained = policy->env_config();
    env->history_len = trained.history_len;
    env->reference_len = trained.reference_len;
    env->include_action_history = trained.include_action_history;
    env->privileged_gravity = trained.privileged_gravity;
    env->action_space = trained.action_space;
    env->control_dt = trained.control_dt;
  }
  const std::string id = "policy-" + to_string(policy->env_config().action_space);
  return {[policy] { return std::make_unique<PolicyController>(*policy); }, id};
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_gen_trajs(RunContext& ctx) {
  const PhysParams nominal = PhysParams::from_config(ctx.cfg);
  ctx.seeds = {ctx.seed()};

  std::vector<NamedTraj> out;
  if (ctx.cfg.get_bool("run.named", false)) {
    for (const std::string& name : named_trajectory_list()) {
      out.push_back({name, make_named_trajectory(name, nominal)});
    }
  } else {
    const int count = ctx.cfg.get_int("run.count", 600);
    if (count < 1) throw std::runtime_error("run.count must be >= 1");
    std::vector<Trajectory> batch = make_training_set(count, ctx.seed(), nominal);
    for (size_t i = 0; i < batch.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "traj_%04zu", i);
      out.push_back({name, std::move(batch[i])});
    }
  }

  const fs::path summary_path = ctx.dir / "metadata.csv";
  std::ofstream summary(summary_path, std::ios::binary);
  if (!summary) throw std::runtime_error("cannot write " + summary_path.string());
  summary << "trajectory,v_max,c_max,omega_max,seed\n";
  double v_max = 0.0, c_max = 0.0;
  for (const NamedTraj& nt : out) {
    nt.traj.write_csv((ctx.dir / (nt.id + ".csv")).string());
    nt.traj.write_meta((ctx.dir / (nt.id + ".meta")).string());
    const TrajMeta& m = nt.traj.metadata();
    summary << nt.id << ',' << format_double(m.v_max) << ',' << format_double(m.c_max) << ','
            << format_double(m.omega_max) << ',' << m.seed << '\n';
    v_max = std::max(v_max, m.v_max);
    c_max = std::max(c_max, m.c_max);
  }
  std::printf("wrote %zu trajectories to %s (peak speed %.2f m/s, peak collective %.2f m/s^2)\n",
              out.size(), ctx.dir.string().c_str(), v_max, c_max);
}

void cmd_train(RunContext& ctx) {
  const PhysParams nominal = PhysParams::from_config(ctx.cfg);
  const EnvConfig env = EnvConfig::from_config(ctx.cfg);
  const PpoConfig pcfg = PpoConfig::from_config(ctx.cfg);
  const int width = ctx.cfg.get_int("run.hidden_width", 64);

  std::vector<NamedTraj> named = resolve_traj_set(ctx.cfg.get_str("run.traj_set", "hover"),
                                                  "run.traj_set", nominal, &ctx);
  std::vector<Trajectory> trajs;
  for (NamedTraj& nt : named) trajs.push_back(std::move(nt.traj));

  const uint64_t seed = ctx.seed();
  ctx.seeds = {seed};
  Policy policy(env, nominal, width);
  policy.init(seed, pcfg.initial_log_std);
  policy.set_initial_mean(hover_command(env.action_space, nominal));

  std::printf("training %s policy: %ld steps, %d agents x %d rollout steps, seed %llu\n",
              to_string(env.action_space).c_str(), pcfg.total_steps, pcfg.num_agents,
              pcfg.rollout_steps, static_cast<unsigned long long>(seed));
  const auto progress = [](const CurveRow& row) {
    std::printf("  iter %4d  steps %9ld  return %12.3f  pos_err %8.2f cm  crash %.2f\n",
                row.iteration, row.env_steps, row.mean_return, row.mean_pos_error_cm,
                row.crash_rate);
    std::fflush(stdout);
  };
  const TrainResult result =
      train_ppo(policy, nominal, trajs, pcfg, seed, progress, ctx.dir.string());

  write_curve_csv((ctx.dir / "learning_curve.csv").string(), result.curve);
  const std::string hash = content_hash(ctx.cfg.to_string());
  policy.save((ctx.dir / "checkpoint_final.qbc").string(), hash);

  if (result.diverged) {
    std::printf("training stopped early: %s (last finite iterate restored)\n",
                result.divergence_reason.c_str());
  }
  std::printf("trained %ld env steps; best return %.3f at iteration %d\n", result.env_steps,
              result.best_return, result.best_iteration);
  std::printf("checkpoint: %s (config hash %s)\n",
              (ctx.dir / "checkpoint_final.qbc").string().c_str(), hash.c_str());
}

void cmd_eval(RunContext& ctx) {
  const PhysParams nominal = PhysParams::from_config(ctx.cfg);
  EnvConfig env = EnvConfig::from_config(ctx.cfg);
  const ControllerSetup ctrl = make_controller(ctx.cfg, nominal, &env, &ctx);
  env.to_config(ctx.cfg);  // snapshot the env the controller dictates
  const std::vector<NamedTraj> trajs =
      resolve_traj_set(ctx.cfg.get_str("run.traj_set", ""), "run.traj_set", nominal, &ctx);
  const int episodes = ctx.cfg.get_int("run.episodes", 1);
  if (episodes < 1) throw std::runtime_error("run.episodes must be >= 1");
  const double post_ramp = ctx.cfg.get_double("run.post_ramp_from", 0.0);
  const bool save_episodes = ctx.cfg.get_bool("run.save_episodes", false);
  const uint64_t seed0 = ctx.seed();
  for (int e = 0; e < episodes; ++e) ctx.seeds.push_back(seed0 + static_cast<uint64_t>(e));

  const int jobs = static_cast<int>(trajs.size()) * episodes;
  std::vector<BenchResult> rows(jobs);
  run_parallel(jobs, ctx.threads(), [&](int job) {
    const NamedTraj& nt = trajs[job / episodes];
    const uint64_t seed = seed0 + static_cast<uint64_t>(job % episodes);
    auto c = ctrl.make();
    const EpisodeLog log = run_tracking(*c, nt.traj, env, nominal, seed);
    rows[job] = summarize(log, ctrl.id, nt.id, seed, post_ramp);
    if (save_episodes) {
      const std::string file = "episode_" + nt.id + "_seed" + std::to_string(seed) + ".csv";
      write_episode_csv((ctx.dir / file).string(), log);
    }
  });

  write_results_csv((ctx.dir / "results.csv").string(), rows);
  for (const BenchResult& r : rows) {
    std::printf("%-14s %-18s seed %llu: %s cm avg (max %s cm), ended %.2f s\n",
                r.controller_id.c_str(), r.trajectory_id.c_str(),
                static_cast<unsigned long long>(r.seed), r.error_cell().c_str(),
                r.crashed ? "crash" : format_double(r.max_error_cm).c_str(), r.end_time);
  }
}

void cmd_sweep_latency(RunContext& ctx) {
  const PhysParams nominal = PhysParams::from_config(ctx.cfg);
  EnvConfig env = EnvConfig::from_config(ctx.cfg);
  const ControllerSetup ctrl = make_controller(ctx.cfg, nominal, &env, &ctx);
  env.to_config(ctx.cfg);
  const std::vector<NamedTraj> trajs =
      resolve_traj_set(ctx.cfg.get_str("run.traj_set", ""), "run.traj_set", nominal, &ctx);

  std::vector<double> latencies = ctx.cfg.has("run.latencies")
                                      ? ctx.cfg.get_list("run.latencies")
                                      : default_latency_grid();
  const int num_seeds = ctx.cfg.get_int("run.eval_seeds", 5);
  if (num_seeds < 1) throw std::runtime_error("run.eval_seeds must be >= 1");
  std::vector<uint64_t> seeds;
  for (int i = 0; i < num_seeds; ++i) seeds.push_back(ctx.seed() + static_cast<uint64_t>(i));
  ctx.seeds = seeds;

  std::vector<BenchResult> rows;
  for (const NamedTraj& nt : trajs) {
    std::vector<BenchResult> part =
        latency_sweep(ctrl.make, nt.traj, nt.id, env, nominal, latencies, seeds, ctx.threads());
    rows.insert(rows.end(), part.begin(), part.end());
  }
  write_results_csv((ctx.dir / "results.csv").string(), rows);

  for (const NamedTraj& nt : trajs) {
    for (const double latency : latencies) {
      double sum = 0.0;
      int completed = 0, crashed = 0;
      for (const BenchResult& r : rows) {
        if (r.trajectory_id != nt.id || r.latency != latency) continue;
        if (r.crashed) {
          ++crashed;
        } else {
          sum += r.avg_error_cm;
          ++completed;
        }
      }
      if (completed > 0) {
        std::printf("%-18s latency %5.1f ms: %8.3f cm avg (%d/%d crashed)\n", nt.id.c_str(),
                    1000.0 * latency, sum / completed, crashed, crashed + completed);
      } else {
        std::printf("%-18s latency %5.1f ms: all %d runs crashed\n", nt.id.c_str(),
                    1000.0 * latency, crashed);
      }
    }
  }
}

void cmd_sweep_gains(RunContext& ctx) {
  const PhysParams nominal = PhysParams::from_config(ctx.cfg);
  EnvConfig env = EnvConfig::from_config(ctx.cfg);
  const ControllerSetup ctrl = make_controller(ctx.cfg, nominal, &env, &ctx);
  env.to_config(ctx.cfg);
  const std::vector<NamedTraj> trajs =
      resolve_traj_set(ctx.cfg.get_str("run.traj_set", ""), "run.traj_set", nominal, &ctx);
  if (trajs.size() != 1) {
    throw std::runtime_error("run.traj_set: sweep-gains expects a single trajectory");
  }
  const std::vector<double> scales =
      ctx.cfg.has("run.scales") ? ctx.cfg.get_list("run.scales") : default_gain_scales();
  const double clip_m = ctx.cfg.get_double("run.clip_m", 5.0);
  ctx.seeds = {ctx.seed()};

  const GainGrid grid = gain_sweep(ctrl.make, trajs[0].traj, env, nominal, scales, scales,
                                   ctx.seed(), clip_m, ctx.threads());
  write_gain_grid_csv((ctx.dir / "gain_grid.csv").string(), grid);

  int crashed = 0;
  for (int i = 0; i < grid.crashed.rows(); ++i) {
    for (int j = 0; j < grid.crashed.cols(); ++j) crashed += grid.crashed(i, j) ? 1 : 0;
  }
  std::printf("%zu x %zu gain grid on %s: %d crashed cells, errors clipped at %.0f cm\n",
              scales.size(), scales.size(), trajs[0].id.c_str(), crashed, grid.clip_cm);
}

void cmd_ablate(RunContext& ctx) {
  const PhysParams nominal = PhysParams::from_config(ctx.cfg);
  const EnvConfig env = EnvConfig::from_config(ctx.cfg);
  const PpoConfig budget = PpoConfig::from_config(ctx.cfg);
  const std::string axis = ctx.cfg.get_str("run.axis", "");
  if (axis != "H" && axis != "R") {
    throw std::runtime_error("run.axis must be H or R, got '" + axis + "'");
  }
  std::vector<int> values;
  for (const double v : ctx.cfg.has("run.values") ? ctx.cfg.get_list("run.values")
                                                  : std::vector<double>{1.0, 5.0, 10.0}) {
    if (v < 1.0 || v != std::floor(v)) {
      throw std::runtime_error("run.values must be positive integers");
    }
    values.push_back(static_cast<int>(v));
  }
  const int num_seeds = ctx.cfg.get_int("run.num_seeds", 3);
  const int eval_episodes = ctx.cfg.get_int("run.eval_episodes", 10);
  const int width = ctx.cfg.get_int("run.hidden_width", 64);
  if (num_seeds < 1 || eval_episodes < 1) {
    throw std::runtime_error("run.num_seeds and run.eval_episodes must be >= 1");
  }

  const std::string train_spec = ctx.cfg.get_str("run.traj_set", "hover");
  std::vector<NamedTraj> train_named =
      resolve_traj_set(train_spec, "run.traj_set", nominal, &ctx);
  std::vector<NamedTraj> eval_named = resolve_traj_set(
      ctx.cfg.get_str("run.eval_set", train_spec), "run.eval_set", nominal, &ctx);
  std::vector<Trajectory> train_trajs, eval_trajs;
  for (NamedTraj& nt : train_named) train_trajs.push_back(std::move(nt.traj));
  for (NamedTraj& nt : eval_named) eval_trajs.push_back(std::move(nt.traj));
  ctx.seeds = {ctx.seed()};

  std::printf("ablating %s over {", axis.c_str());
  for (size_t i = 0; i < values.size(); ++i) std::printf("%s%d", i ? ", " : "", values[i]);
  std::printf("}: %d seeds x %ld steps each\n", num_seeds, budget.total_steps);
  std::fflush(stdout);

  const std::vector<AblationCell> cells =
      ablation_batch(axis, values, env, nominal, train_trajs, eval_trajs, budget, num_seeds,
                     ctx.seed(), eval_episodes, width);
  write_ablation_csv((ctx.dir / "ablation.csv").string(), cells);

  for (const AblationCell& cell : cells) {
    if (cell.crash_rate >= 1.0) {
      std::printf("  %s=%2d: all episodes crashed\n", cell.axis.c_str(), cell.value);
    } else {
      std::printf("  %s=%2d: %.2f +/- %.2f cm, crash rate %.2f\n", cell.axis.c_str(),
                  cell.value, cell.mean_error_cm, cell.std_error_cm, cell.crash_rate);
    }
  }
}

// ---------------------------------------------------------------------------
// plot

double cell_value(const std::vector<std::string>& row, int col) {
  if (col < 0 || col >= static_cast<int>(row.size())) return std::nan("");
  const std::string& s = row[col];
  if (s.empty() || s == "crash") return std::nan("");
  return std::strtod(s.c_str(), nullptr);
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

int plot_results(const fs::path& csv, const fs::path& out_dir) {
  const CsvTable table = CsvTable::read(csv.string());
  const int c_ctrl = table.col("controller");
  const int c_traj = table.col("trajectory");
  const int c_lat = table.col("latency_ms");
  const int c_err = table.col("avg_error_cm");
  if (c_ctrl < 0 || c_lat < 0 || c_err < 0) return 0;

  // One curve per (controller, trajectory): mean error over seeds at each
  // latency; latencies where every seed crashed leave a gap.
  std::vector<std::string> curve_keys;
  std::map<std::string, std::map<double, std::pair<double, int>>> curves;
  for (const auto& row : table.rows) {
    std::string key = row[c_ctrl];
    if (c_traj >= 0) key += " / " + row[c_traj];
    if (!curves.count(key)) curve_keys.push_back(key);
    const double latency = cell_value(row, c_lat);
    const double err = cell_value(row, c_err);
    if (!std::isfinite(latency)) continue;
    auto& [sum, n] = curves[key][latency];
    if (std::isfinite(err)) {
      sum += err;
      n += 1;
    }
  }

  std::vector<Series> series;
  size_t distinct_latencies = 0;
  for (size_t k = 0; k < curve_keys.size(); ++k) {
    const auto& points = curves[curve_keys[k]];
    distinct_latencies = std::max(distinct_latencies, points.size());
    Series s;
    s.label = curve_keys[k];
    s.color = kPalette[k % std::size(kPalette)];
    s.markers = true;
    for (const auto& [latency, acc] : points) {
      s.x.push_back(latency);
      s.y.push_back(acc.second > 0 ? acc.first / acc.second : std::nan(""));
    }
    series.push_back(std::move(s));
  }
  if (distinct_latencies < 2) return 0;

  ChartOptions opt;
  opt.title = "Tracking error vs control latency";
  opt.x_label = "latency [ms]";
  opt.y_label = "avg position error [cm]";
  render_line_chart((out_dir / "error_vs_latency.svg").string(), opt, series);
  return 1;
}

int plot_gain_grid(const fs::path& csv, const fs::path& out_dir) {
  const CsvTable table = CsvTable::read(csv.string());
  if (table.header.empty() || table.header[0] != "d_scale/p_scale" || table.rows.empty()) {
    return 0;
  }
  const int nx = static_cast<int>(table.header.size()) - 1;
  const int ny = static_cast<int>(table.rows.size());
  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(nx, ny);
  Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask(nx, ny);
  mask.setZero();
  HeatmapOptions opt;
  for (int i = 0; i < nx; ++i) opt.x_ticks.push_back(table.header[i + 1]);
  for (int j = 0; j < ny; ++j) {
    opt.y_ticks.push_back(table.rows[j].empty() ? "" : table.rows[j][0]);
    for (int i = 0; i < nx; ++i) {
      const double v = cell_value(table.rows[j], i + 1);
      if (std::isfinite(v)) {
        values(i, j) = v;
      } else {
        mask(i, j) = 1;
      }
    }
  }
  opt.title = "Gain sensitivity (avg error [cm])";
  opt.x_label = "P gain scale";
  opt.y_label = "D gain scale";
  render_heatmap((out_dir / "gain_grid.svg").string(), opt, values, mask);
  return 1;
}

int plot_learning_curve(const fs::path& csv, const fs::path& out_dir) {
  const CsvTable table = CsvTable::read(csv.string());
  const int c_steps = table.col("env_steps");
  if (c_steps < 0 || table.rows.empty()) return 0;
  const struct {
    const char* column;
    const char* file;
    const char* label;
  } panels[] = {
      {"mean_return", "learning_return.svg", "mean episode return"},
      {"mean_pos_error_cm", "learning_error.svg", "mean position error [cm]"},
      {"crash_rate", "learning_crash.svg", "crash rate"},
  };
  int produced = 0;
  for (const auto& panel : panels) {
    const int c = table.col(panel.column);
    if (c < 0) continue;
    Series s;
    s.color = kPalette[0];
    for (const auto& row : table.rows) {
      s.x.push_back(cell_value(row, c_steps));
      s.y.push_back(cell_value(row, c));
    }
    ChartOptions opt;
    opt.title = panel.label;
    opt.x_label = "environment steps";
    opt.y_label = panel.label;
    render_line_chart((out_dir / panel.file).string(), opt, {s});
    ++produced;
  }
  return produced;
}

int plot_episode(const fs::path& csv, const fs::path& out_dir) {
  const CsvTable table = CsvTable::read(csv.string());
  const int c_t = table.col("t");
  if (c_t < 0 || table.rows.empty()) return 0;
  const char* axes[3][2] = {{"px", "ref_px"}, {"py", "ref_py"}, {"pz", "ref_pz"}};
  std::vector<Series> series;
  for (int a = 0; a < 3; ++a) {
    const int c_act = table.col(axes[a][0]);
    const int c_ref = table.col(axes[a][1]);
    if (c_act < 0 || c_ref < 0) return 0;
    Series actual, ref;
    actual.label = axes[a][0];
    actual.color = kPalette[a];
    ref.label = std::string(axes[a][1]);
    ref.color = kPalette[a];
    ref.dashed = true;
    for (const auto& row : table.rows) {
      actual.x.push_back(cell_value(row, c_t));
      actual.y.push_back(cell_value(row, c_act));
      ref.x.push_back(cell_value(row, c_t));
      ref.y.push_back(cell_value(row, c_ref));
    }
    series.push_back(std::move(actual));
    series.push_back(std::move(ref));
  }
  ChartOptions opt;
  opt.title = csv.stem().string();
  opt.x_label = "t [s]";
  opt.y_label = "position [m]";
  render_line_chart((out_dir / (csv.stem().string() + ".svg")).string(), opt, series);
  return 1;
}

void cmd_plot(RunContext& ctx) {
  const fs::path src(ctx.cfg.get_str("run.source", ""));
  if (!fs::is_directory(src)) {
    throw std::runtime_error("run.source: '" + src.string() + "' is not a directory");
  }
  int produced = 0;
  const auto consider = [&](const fs::path& file, const auto& renderer) {
    if (!fs::exists(file)) return;
    ctx.note_input(file);
    produced += renderer(file, ctx.dir);
  };
  consider(src / "results.csv", plot_results);
  consider(src / "gain_grid.csv", plot_gain_grid);
  consider(src / "learning_curve.csv", plot_learning_curve);

  std::vector<fs::path> episodes;
  for (const auto& entry : fs::directory_iterator(src)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.rfind("episode_", 0) == 0 &&
        entry.path().extension() == ".csv") {
      episodes.push_back(entry.path());
    }
  }
  std::sort(episodes.begin(), episodes.end());
  for (const fs::path& ep : episodes) consider(ep, plot_episode);

  if (produced == 0) {
    throw std::runtime_error("run.source: no plottable CSVs in '" + src.string() + "'");
  }
  std::printf("rendered %d figure(s) from %s into %s\n", produced, src.string().c_str(),
              ctx.dir.string().c_str());
}

// ---------------------------------------------------------------------------
// Dispatch, rerun, and flag wiring

void dispatch(RunContext& ctx) {
  const std::string command = ctx.cfg.get_str("run.command", "");
  if (command == "gen-trajs") {
    cmd_gen_trajs(ctx);
  } else if (command == "train") {
    cmd_train(ctx);
  } else if (command == "eval") {
    cmd_eval(ctx);
  } else if (command == "sweep-latency") {
    cmd_sweep_latency(ctx);
  } else if (command == "sweep-gains") {
    cmd_sweep_gains(ctx);
  } else if (command == "ablate") {
    cmd_ablate(ctx);
  } else if (command == "plot") {
    cmd_plot(ctx);
  } else {
    throw std::runtime_error("run.command: unknown command '" + command + "'");
  }
  write_manifest(ctx);
  std::printf("manifest: %s\n", (ctx.dir / "manifest.json").string().c_str());
}

// Byte-compares every artifact (manifest excluded: it records the output
// directory) between the original run and the re-run. Nested directories
// holding their own manifest are separate runs and are skipped.
void check_reproduction(const fs::path& original, const fs::path& rerun_dir) {
  const auto relative_files = [](const fs::path& root) {
    std::vector<fs::path> files;
    for (auto it = fs::recursive_directory_iterator(root);
         it != fs::recursive_directory_iterator(); ++it) {
      if (it->is_directory() && fs::exists(it->path() / "manifest.json")) {
        it.disable_recursion_pending();
        continue;
      }
      if (it->is_regular_file() && it->path().filename() != "manifest.json") {
        files.push_back(fs::relative(it->path(), root));
      }
    }
    std::sort(files.begin(), files.end());
    return files;
  };
  if (!fs::is_directory(original)) {
    throw std::runtime_error("rerun: original output directory '" + original.string() +
                             "' not found, cannot --check");
  }
  const std::vector<fs::path> want = relative_files(original);
  const std::vector<fs::path> got = relative_files(rerun_dir);
  for (const fs::path& rel : want) {
    if (!fs::exists(rerun_dir / rel)) {
      throw std::runtime_error("determinism check failed: re-run did not produce " +
                               rel.string());
    }
    if (read_file_bytes(original / rel) != read_file_bytes(rerun_dir / rel)) {
      throw std::runtime_error("determinism check failed: " + rel.string() +
                               " differs from the original run");
    }
  }
  for (const fs::path& rel : got) {
    if (std::find(want.begin(), want.end(), rel) == want.end()) {
      throw std::runtime_error("determinism check failed: re-run produced extra file " +
                               rel.string());
    }
  }
  std::printf("determinism check passed: %zu files identical\n", want.size());
}

// Flags shared by every subcommand.
struct CommonFlags {
  std::string config_file;
  std::string out;
  std::vector<std::string> sets;
  std::int64_t seed{0};
  int threads{0};
  bool strict{false};
  bool force{false};
};

void add_common_flags(CLI::App* sub, CommonFlags& flags) {
  sub->add_option("--config", flags.config_file, "configuration file (key = value lines)")
      ->check(CLI::ExistingFile);
  sub->add_option("--set", flags.sets,
                  "override a single configuration key, e.g. --set env.latency=0.02");
  sub->add_option("--out", flags.out, "run directory (default: <output root>/<command>)");
  sub->add_option("--seed", flags.seed, "base random seed");
  sub->add_option("--threads", flags.threads, "worker threads (0 = hardware concurrency)");
  sub->add_flag("--strict-determinism", flags.strict,
                "force serial execution so artifacts reproduce byte-for-byte");
  sub->add_flag("--force", flags.force, "allow writing into a non-empty run directory");
}

// Assembles the resolved config for one invocation: defaults, then the
// config file, then the flags.
Config resolve_config(const std::string& command, CLI::App* sub, const CommonFlags& flags) {
  Config cfg = default_config(command);
  if (!flags.config_file.empty()) cfg.merge(Config::from_file(flags.config_file));
  apply_set_overrides(cfg, flags.sets);
  if (sub->count("--seed")) cfg.set_int("run.seed", static_cast<int>(flags.seed));
  if (sub->count("--threads")) cfg.set_int("run.threads", flags.threads);
  if (flags.strict) cfg.set_bool("run.strict_determinism", true);
  return cfg;
}

int execute(Config cfg, const fs::path& out_dir, const std::string& config_file, bool force) {
  RunContext ctx{std::move(cfg), prepare_run_dir(out_dir, force)};
  if (!config_file.empty()) ctx.note_input(config_file);
  dispatch(ctx);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quadbench: quadrotor flight-control benchmark"};
  app.require_subcommand(1);
  app.footer("The default output root is ./runs; set QUADBENCH_OUT to change it.");

  std::map<std::string, CommonFlags> common;
  const auto sub_with_common = [&](const std::string& name, const std::string& desc) {
    CLI::App* sub = app.add_subcommand(name, desc);
    add_common_flags(sub, common[name]);
    return sub;
  };

  // gen-trajs
  CLI::App* gen = sub_with_common("gen-trajs", "generate the training trajectory set");
  int gen_count = 600;
  bool gen_named = false;
  gen->add_option("--count", gen_count, "number of trajectories (default 600)");
  gen->add_flag("--named", gen_named, "export the named evaluation stand-ins instead");

  // train
  CLI::App* train = sub_with_common("train", "train a PPO policy");
  std::string train_space, train_trajset;
  double train_steps = 0.0;
  int train_width = 0;
  train->add_option("--action-space", train_space, "srt, ctbr, or lv")->required();
  train->add_option("--traj-set", train_trajset,
                    "trajectories to train on: names, CSV files, or directories");
  train->add_option("--steps", train_steps, "total environment steps, e.g. 2e6");
  train->add_option("--hidden-width", train_width, "encoder width (default 64)");

  // eval
  CLI::App* eval_cmd = sub_with_common("eval", "run tracking episodes for one controller");
  std::string eval_ctrl, eval_traj, eval_space, eval_hash;
  int eval_episodes = 1;
  double eval_latency = 0.0, eval_post_ramp = 0.0;
  bool eval_save = false;
  eval_cmd
      ->add_option("--controller", eval_ctrl,
                   "mpc-srt, mpc-ctbr, feedforward, zero-thrust, or a checkpoint file")
      ->required();
  eval_cmd->add_option("--traj", eval_traj, "trajectories: names, CSV files, or directories")
      ->required();
  eval_cmd->add_option("--episodes", eval_episodes, "episodes per trajectory (default 1)");
  eval_cmd->add_option("--latency", eval_latency, "actuation latency in seconds");
  eval_cmd->add_option("--post-ramp", eval_post_ramp,
                       "start of the post-ramp error window in seconds");
  eval_cmd->add_option("--action-space", eval_space,
                       "assert the checkpoint's action space (srt, ctbr, lv)");
  eval_cmd->add_option("--expect-config-hash", eval_hash,
                       "require the checkpoint to carry this config hash");
  eval_cmd->add_flag("--save-episodes", eval_save, "write per-step episode CSVs");

  // sweep-latency
  CLI::App* slat = sub_with_common("sweep-latency", "tracking error across actuation latencies");
  std::string slat_ctrl, slat_traj, slat_grid;
  int slat_seeds = 5;
  slat->add_option("--controller", slat_ctrl, "controller under test")->required();
  slat->add_option("--traj", slat_traj, "trajectories: names, CSV files, or directories")
      ->required();
  slat->add_option("--latencies", slat_grid,
                   "comma-separated latencies in seconds (default 0 to 0.06 by 0.005)");
  slat->add_option("--seeds", slat_seeds, "episodes per latency (default 5)");

  // sweep-gains
  CLI::App* sgain = sub_with_common("sweep-gains", "low-level gain sensitivity grid");
  std::string sgain_ctrl, sgain_traj, sgain_scales;
  double sgain_clip = 5.0;
  sgain->add_option("--controller", sgain_ctrl, "controller under test")->required();
  sgain->add_option("--traj", sgain_traj, "single trajectory: name or CSV file")->required();
  sgain->add_option("--scales", sgain_scales,
                    "comma-separated gain scales applied to both axes (default 11 values)");
  sgain->add_option("--clip", sgain_clip, "error clip in meters (default 5)");

  // ablate
  CLI::App* abl = sub_with_common("ablate", "observation-window ablation (train + eval)");
  std::string abl_axis, abl_values, abl_space, abl_trajset, abl_evalset;
  double abl_steps = 0.0;
  int abl_seeds = 3, abl_eval_eps = 10, abl_width = 0;
  abl->add_option("--axis", abl_axis, "H (state history) or R (reference window)")->required();
  abl->add_option("--values", abl_values, "comma-separated window lengths (default 1,5,10)");
  abl->add_option("--action-space", abl_space, "srt, ctbr, or lv (default ctbr)");
  abl->add_option("--traj-set", abl_trajset, "training trajectories (default hover)");
  abl->add_option("--eval-set", abl_evalset, "evaluation trajectories (default: training set)");
  abl->add_option("--steps", abl_steps, "training budget per cell, e.g. 2e5");
  abl->add_option("--num-seeds", abl_seeds, "training seeds per cell (default 3)");
  abl->add_option("--eval-episodes", abl_eval_eps, "evaluation episodes per seed (default 10)");
  abl->add_option("--hidden-width", abl_width, "encoder width (default 64)");

  // plot
  CLI::App* plot = sub_with_common("plot", "render a run's CSV artifacts to SVG figures");
  std::string plot_src;
  plot->add_option("--run", plot_src, "run directory containing the CSVs")->required();

  // rerun
  CLI::App* rerun = sub_with_common("rerun", "re-execute a run from its manifest");
  std::string rerun_manifest;
  bool rerun_check = false;
  rerun->add_option("--manifest", rerun_manifest, "manifest.json of the original run")
      ->required()
      ->check(CLI::ExistingFile);
  rerun->add_flag("--check", rerun_check,
                  "byte-compare the reproduced artifacts against the original run");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto out_or_default = [&](const CommonFlags& flags, const fs::path& fallback) {
      return flags.out.empty() ? fallback : fs::path(flags.out);
    };

    if (gen->parsed()) {
      const CommonFlags& flags = common["gen-trajs"];
      Config cfg = resolve_config("gen-trajs", gen, flags);
      if (gen->count("--count")) cfg.set_int("run.count", gen_count);
      if (gen_named) cfg.set_bool("run.named", true);
      return execute(std::move(cfg), out_or_default(flags, fs::path(output_root()) / "gen-trajs"),
                     flags.config_file, flags.force);
    }
    if (train->parsed()) {
      const CommonFlags& flags = common["train"];
      Config cfg = resolve_config("train", train, flags);
      cfg.set_str("env.action_space", train_space);
      if (train->count("--traj-set")) cfg.set_str("run.traj_set", absolutize_paths(train_trajset));
      if (!cfg.has("run.traj_set")) cfg.set_str("run.traj_set", "hover");
      if (train->count("--steps")) cfg.set_double("ppo.total_steps", train_steps);
      if (train->count("--hidden-width")) cfg.set_int("run.hidden_width", train_width);
      return execute(std::move(cfg), out_or_default(flags, fs::path(output_root()) / "train"),
                     flags.config_file, flags.force);
    }
    if (eval_cmd->parsed()) {
      const CommonFlags& flags = common["eval"];
      Config cfg = resolve_config("eval", eval_cmd, flags);
      cfg.set_str("run.controller", absolutize_paths(eval_ctrl));
      cfg.set_str("run.traj_set", absolutize_paths(eval_traj));
      if (eval_cmd->count("--episodes")) cfg.set_int("run.episodes", eval_episodes);
      if (eval_cmd->count("--latency")) cfg.set_double("env.latency", eval_latency);
      if (eval_cmd->count("--post-ramp")) cfg.set_double("run.post_ramp_from", eval_post_ramp);
      if (eval_cmd->count("--action-space")) cfg.set_str("run.action_space", eval_space);
      if (eval_cmd->count("--expect-config-hash"))
        cfg.set_str("run.expect_config_hash", eval_hash);
      if (eval_save) cfg.set_bool("run.save_episodes", true);
      return execute(std::move(cfg), out_or_default(flags, fs::path(output_root()) / "eval"),
                     flags.config_file, flags.force);
    }
    if (slat->parsed()) {
      const CommonFlags& flags = common["sweep-latency"];
      Config cfg = resolve_config("sweep-latency", slat, flags);
      cfg.set_str("run.controller", absolutize_paths(slat_ctrl));
      cfg.set_str("run.traj_set", absolutize_paths(slat_traj));
      if (slat->count("--latencies")) cfg.set("run.latencies", slat_grid);
      if (slat->count("--seeds")) cfg.set_int("run.eval_seeds", slat_seeds);
      return execute(std::move(cfg),
                     out_or_default(flags, fs::path(output_root()) / "sweep-latency"),
                     flags.config_file, flags.force);
    }
    if (sgain->parsed()) {
      const CommonFlags& flags = common["sweep-gains"];
      Config cfg = resolve_config("sweep-gains", sgain, flags);
      cfg.set_str("run.controller", absolutize_paths(sgain_ctrl));
      cfg.set_str("run.traj_set", absolutize_paths(sgain_traj));
      if (sgain->count("--scales")) cfg.set("run.scales", sgain_scales);
      if (sgain->count("--clip")) cfg.set_double("run.clip_m", sgain_clip);
      return execute(std::move(cfg),
                     out_or_default(flags, fs::path(output_root()) / "sweep-gains"),
                     flags.config_file, flags.force);
    }
    if (abl->parsed()) {
      const CommonFlags& flags = common["ablate"];
      Config cfg = resolve_config("ablate", abl, flags);
      cfg.set_str("run.axis", abl_axis);
      if (abl->count("--values")) cfg.set("run.values", abl_values);
      if (abl->count("--action-space")) cfg.set_str("env.action_space", abl_space);
      if (abl->count("--traj-set")) cfg.set_str("run.traj_set", absolutize_paths(abl_trajset));
      if (abl->count("--eval-set")) cfg.set_str("run.eval_set", absolutize_paths(abl_evalset));
      if (abl->count("--steps")) cfg.set_double("ppo.total_steps", abl_steps);
      if (abl->count("--num-seeds")) cfg.set_int("run.num_seeds", abl_seeds);
      if (abl->count("--eval-episodes")) cfg.set_int("run.eval_episodes", abl_eval_eps);
      if (abl->count("--hidden-width")) cfg.set_int("run.hidden_width", abl_width);
      return execute(std::move(cfg), out_or_default(flags, fs::path(output_root()) / "ablate"),
                     flags.config_file, flags.force);
    }
    if (plot->parsed()) {
      const CommonFlags& flags = common["plot"];
      Config cfg = resolve_config("plot", plot, flags);
      if (!fs::is_directory(plot_src)) {
        throw std::runtime_error("run.source: '" + plot_src + "' is not a directory");
      }
      cfg.set_str("run.source", fs::absolute(plot_src).lexically_normal().string());
      return execute(std::move(cfg), out_or_default(flags, fs::path(plot_src) / "plots"),
                     flags.config_file, flags.force);
    }
    if (rerun->parsed()) {
      const CommonFlags& flags = common["rerun"];
      const json manifest = json::parse(read_file_bytes(rerun_manifest));
      if (!manifest.contains("command") || !manifest.contains("config")) {
        throw std::runtime_error("rerun: " + rerun_manifest +
                                 " is missing the command or config field");
      }
      Config cfg;
      for (const auto& [key, value] : manifest["config"].items()) {
        cfg.set(key, value.get<std::string>());
      }
      cfg.set_str("run.command", manifest["command"].get<std::string>());
      if (rerun->count("--seed")) cfg.set_int("run.seed", static_cast<int>(flags.seed));
      if (rerun->count("--threads")) cfg.set_int("run.threads", flags.threads);
      if (flags.strict) cfg.set_bool("run.strict_determinism", true);
      apply_set_overrides(cfg, flags.sets);

      const fs::path original = manifest.value("output_dir", "");
      if (original.empty() && flags.out.empty()) {
        throw std::runtime_error("rerun: manifest has no output_dir; pass --out");
      }
      const fs::path dir =
          flags.out.empty() ? fs::path(original.string() + "-rerun") : fs::path(flags.out);
      execute(std::move(cfg), dir, rerun_manifest, flags.force);
      if (rerun_check) check_reproduction(original, dir);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
