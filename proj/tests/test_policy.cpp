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

#include "quadbench/policy.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"

using namespace quadbench;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

EnvConfig quiet_config(ActionSpace space, int h = 1, int r = 1) {
  EnvConfig cfg;
  cfg.action_space = space;
  cfg.history_len = h;
  cfg.reference_len = r;
  cfg.randomize = false;
  cfg.noise = NoiseSpec::none();
  cfg.init_perturb = InitPerturbSpec::none();
  return cfg;
}

Trajectory hover_traj(const PhysParams& p, const Vec3& at, double duration) {
  return Trajectory::from_signal(HoverSignal(at, duration), p);
}

bool bitwise_equal(const VectorXd& a, const VectorXd& b) {
  if (a.size() != b.size()) return false;
  return a.size() == 0 || (a - b).cwiseAbs().maxCoeff() == 0.0;
}

// Small policy plus a synthetic minibatch with a mix of clipped and
// unclipped samples, the shared fixture of the gradient tests.
struct GradFixture {
  PhysParams params;
  Policy policy;
  Minibatch mb;

  explicit GradFixture(uint64_t seed, int batch = 6)
      : policy(quiet_config(ActionSpace::kCtbr), params, 4) {
    policy.init(seed, -0.5);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int obs_dim = policy.state_dim() + policy.ref_dim();
    mb.obs.resize(obs_dim, batch);
    mb.priv.resize(policy.priv_dim(), batch);
    for (int b = 0; b < batch; ++b) {
      for (int i = 0; i < obs_dim; ++i) mb.obs(i, b) = 0.5 * gauss(rng);
      for (int i = 0; i < policy.priv_dim(); ++i) mb.priv(i, b) = 0.2 * gauss(rng);
    }
    const MatrixXd mean = policy.actor_mean_raw(mb.obs);
    const Vec4 sigma = policy.log_std().array().exp();
    mb.actions.resize(4, batch);
    for (int b = 0; b < batch; ++b) {
      for (int j = 0; j < 4; ++j) mb.actions(j, b) = mean(j, b) + sigma(j) * gauss(rng);
    }
    const VectorXd logp = gaussian_log_prob(mean, policy.log_std(), mb.actions);
    mb.old_logp.resize(batch);
    mb.advantages.resize(batch);
    mb.returns.resize(batch);
    for (int b = 0; b < batch; ++b) {
      // Spread old log-probs so some ratios land outside the clip band.
      mb.old_logp(b) = logp(b) - 0.4 * gauss(rng);
      mb.advantages(b) = gauss(rng);
      mb.returns(b) = gauss(rng);
    }
  }
};

double loss_at(Policy policy, const Minibatch& mb, const PpoConfig& cfg, bool actor,
               int index, double value) {
  VectorXd& target = actor ? policy.actor_params() : policy.critic_params();
  target(index) = value;
  VectorXd ga, gc;
  return ppo_loss_grad(policy, mb, cfg, &ga, &gc).total;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("net: forward pass matches a hand-computed single layer") {
  Net net({2, 3}, false);
  REQUIRE(net.param_count() == 2 * 3 + 3);
  VectorXd p(net.param_count());
  // Column-major weight block, then the bias.
  Eigen::Map<MatrixXd>(p.data(), 3, 2) << 0.5, -1.0, 2.0, 0.25, 0.0, -0.75;
  p.tail(3) << 0.1, -0.2, 0.3;

  MatrixXd x(2, 2);
  x << 1.0, -0.5, 0.5, 2.0;
  const MatrixXd y = net.forward(p.data(), x);
  const MatrixXd w = Eigen::Map<MatrixXd>(p.data(), 3, 2);
  const MatrixXd expect = ((w * x).colwise() + VectorXd(p.tail(3))).array().tanh();
  CHECK((y - expect).cwiseAbs().maxCoeff() == 0.0);

  Net lin({2, 3}, true);
  const MatrixXd y_lin = lin.forward(p.data(), x);
  const MatrixXd expect_lin = (w * x).colwise() + VectorXd(p.tail(3));
  CHECK((y_lin - expect_lin).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS(net.forward(p.data(), MatrixXd::Zero(3, 1)));
}

TEST_CASE("net: backward pass matches central finite differences") {
  for (const bool linear : {false, true}) {
    Net net({3, 5, 2}, linear);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss(0.0, 1.0);
    VectorXd p(net.param_count());
    for (int i = 0; i < p.size(); ++i) p(i) = 0.5 * gauss(rng);
    MatrixXd x(3, 4), target(2, 4);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);
    for (int i = 0; i < target.size(); ++i) target.data()[i] = gauss(rng);

    const auto loss = [&](const VectorXd& pp, const MatrixXd& xx) {
      return 0.5 * (net.forward(pp.data(), xx) - target).squaredNorm();
    };

    Net::Cache cache;
    const MatrixXd y = net.forward(p.data(), x, &cache);
    VectorXd grad = VectorXd::Zero(net.param_count());
    const MatrixXd dx = net.backward(p.data(), cache, y - target, grad.data());

    for (int i = 0; i < p.size(); ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(p(i)));
      VectorXd pp = p;
      pp(i) = p(i) + h;
      const double up = loss(pp, x);
      pp(i) = p(i) - h;
      const double dn = loss(pp, x);
      const double fd = (up - dn) / (2.0 * h);
      CHECK(std::abs(fd - grad(i)) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
    for (int i = 0; i < x.size(); ++i) {
      MatrixXd xx = x;
      const double h = 1e-6 * std::max(1.0, std::abs(x.data()[i]));
      xx.data()[i] = x.data()[i] + h;
      const double up = loss(p, xx);
      xx.data()[i] = x.data()[i] - h;
      const double dn = loss(p, xx);
      const double fd = (up - dn) / (2.0 * h);
      CHECK(std::abs(fd - dx.data()[i]) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("net: initialization is orthogonal with the requested gain") {
  std::mt19937_64 rng(3);

  Net wide({8, 4}, false);
  VectorXd p(wide.param_count());
  wide.init(p.data(), rng, 2.0, 1.0);
  const MatrixXd w = Eigen::Map<MatrixXd>(p.data(), 4, 8);
  CHECK((w * w.transpose() - 4.0 * MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(p.tail(4).cwiseAbs().maxCoeff() == 0.0);

  Net tall({4, 8}, true);
  VectorXd q(tall.param_count());
  tall.init(q.data(), rng, 2.0, 0.01);
  const MatrixXd wt = Eigen::Map<MatrixXd>(q.data(), 8, 4);
  CHECK((wt.transpose() * wt - 1e-4 * MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("policy: zero weights put the mean at the box center") {
  PhysParams p;
  for (const ActionSpace space :
       {ActionSpace::kSrt, ActionSpace::kCtbr, ActionSpace::kLv}) {
    Policy policy(quiet_config(space), p, 4);
    policy.init(5, -0.7);
    policy.actor_params().setZero();
    policy.actor_params().segment<4>(policy.log_std_offset()).setConstant(-0.7);

    VectorXd obs = VectorXd::Random(policy.state_dim() + policy.ref_dim());
    const auto [mean, std] = policy.actor_forward(obs);
    CHECK((mean - policy.box_center()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((std - Vec4::Constant(std::exp(-0.7))).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("policy: forward passes are deterministic") {
  PhysParams p;
  Policy policy(quiet_config(ActionSpace::kCtbr, 2, 3), p, 8);
  policy.init(17, -1.0);
  const VectorXd obs = VectorXd::Random(policy.state_dim() + policy.ref_dim());
  const VectorXd priv = VectorXd::Random(policy.priv_dim());

  const auto [m1, s1] = policy.actor_forward(obs);
  const auto [m2, s2] = policy.actor_forward(obs);
  CHECK((m1 - m2).cwiseAbs().maxCoeff() == 0.0);
  CHECK((s1 - s2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(policy.value(obs, priv)(0) == policy.value(obs, priv)(0));

  // Same seed, same parameters.
  Policy twin(quiet_config(ActionSpace::kCtbr, 2, 3), p, 8);
  twin.init(17, -1.0);
  CHECK(bitwise_equal(twin.actor_params(), policy.actor_params()));
  CHECK(bitwise_equal(twin.critic_params(), policy.critic_params()));
}

TEST_CASE("policy: state and reference entries flow through separate encoders") {
  PhysParams p;
  Policy policy(quiet_config(ActionSpace::kCtbr, 2, 2), p, 8);
  policy.init(23, -1.0);
  VectorXd obs = VectorXd::Random(policy.state_dim() + policy.ref_dim());

  const auto [s0, r0] = policy.actor_encodings(obs);

  VectorXd obs_ref = obs;
  obs_ref(policy.state_dim() + 3) += 0.25;
  const auto [s1, r1] = policy.actor_encodings(obs_ref);
  CHECK(bitwise_equal(s1, s0));
  CHECK(!bitwise_equal(r1, r0));

  VectorXd obs_state = obs;
  obs_state(2) += 0.25;
  const auto [s2, r2] = policy.actor_encodings(obs_state);
  CHECK(!bitwise_equal(s2, s0));
  CHECK(bitwise_equal(r2, r0));
}

TEST_CASE("policy: privileged entries reach the critic but never the actor") {
  PhysParams p;
  Policy policy(quiet_config(ActionSpace::kCtbr), p, 8);
  policy.init(29, -1.0);
  const VectorXd obs = VectorXd::Random(policy.state_dim() + policy.ref_dim());
  VectorXd priv = VectorXd::Random(policy.priv_dim());

  const auto [mean_before, std_before] = policy.actor_forward(obs);
  const double v_before = policy.value(obs, priv)(0);

  priv.setZero();
  const auto [mean_after, std_after] = policy.actor_forward(obs);
  const double v_after = policy.value(obs, priv)(0);

  CHECK((mean_before - mean_after).cwiseAbs().maxCoeff() == 0.0);
  CHECK(v_before != v_after);
}

TEST_CASE("policy: raw samples clip into the command box") {
  PhysParams p;
  Policy policy(quiet_config(ActionSpace::kSrt), p, 4);
  const Command cmd = policy.to_command(Vec4{5.0, -5.0, 0.0, 1.0});
  const Vec4 u = std::get<SrtCommand>(cmd).thrust;
  CHECK(u(0) == p.max_rotor_thrust);
  CHECK(u(1) == 0.0);
  CHECK(u(2) == doctest::Approx(0.5 * p.max_rotor_thrust));
  CHECK(u(3) == p.max_rotor_thrust);
}

TEST_CASE("gaussian log-prob matches the closed form") {
  MatrixXd mean(4, 1);
  mean << 0.5, -1.0, 0.0, 2.0;
  Vec4 log_std{-0.5, 0.0, 0.3, -1.0};
  MatrixXd a(4, 1);
  a << 0.7, -1.0, -0.4, 1.5;

  double expect = 0.0;
  for (int j = 0; j < 4; ++j) {
    const double sigma = std::exp(log_std(j));
    const double z = (a(j, 0) - mean(j, 0)) / sigma;
    expect += -0.5 * z * z - log_std(j) - 0.5 * std::log(2.0 * M_PI);
  }
  const VectorXd got = gaussian_log_prob(mean, log_std, a);
  CHECK(got(0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("gae: matches the brute-force discounted-sum oracle") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int t_len = 10;
  VectorXd rewards(t_len), values(t_len + 1);
  for (int t = 0; t <= t_len; ++t) values(t) = gauss(rng);
  for (int t = 0; t < t_len; ++t) rewards(t) = gauss(rng);
  std::vector<uint8_t> dones(t_len, 0);
  dones[4] = 1;

  const double gamma = 0.98, lambda = 0.95;
  VectorXd adv, ret;
  gae(rewards, values, dones, gamma, lambda, &adv, &ret);

  for (int t = 0; t < t_len; ++t) {
    double sum = 0.0, w = 1.0;
    for (int l = t; l < t_len; ++l) {
      const double next_v = dones[l] ? 0.0 : values(l + 1);
      sum += w * (rewards(l) + gamma * next_v - values(l));
      if (dones[l]) break;
      w *= gamma * lambda;
    }
    CHECK(std::abs(adv(t) - sum) < 1e-10);
    CHECK(std::abs(ret(t) - (sum + values(t))) < 1e-10);
  }
}

TEST_CASE("gae: undiscounted lambda-one advantages are summed future rewards") {
  VectorXd rewards(4);
  rewards << 1.0, 2.0, 3.0, 4.0;
  const VectorXd values = VectorXd::Zero(5);
  std::vector<uint8_t> dones(4, 0);
  VectorXd adv, ret;
  gae(rewards, values, dones, 1.0, 1.0, &adv, &ret);
  CHECK(adv(0) == doctest::Approx(10.0));
  CHECK(adv(1) == doctest::Approx(9.0));
  CHECK(adv(2) == doctest::Approx(7.0));
  CHECK(adv(3) == doctest::Approx(4.0));
}

TEST_CASE("gae: lambda zero reduces to one-step TD residuals") {
  std::mt19937_64 rng(37);
  std::normal_distribution<double> gauss(0.0, 1.0);
  VectorXd rewards(5), values(6);
  for (int t = 0; t < 5; ++t) rewards(t) = gauss(rng);
  for (int t = 0; t < 6; ++t) values(t) = gauss(rng);
  std::vector<uint8_t> dones(5, 0);
  const double gamma = 0.9;
  VectorXd adv, ret;
  gae(rewards, values, dones, gamma, 0.0, &adv, &ret);
  for (int t = 0; t < 5; ++t) {
    CHECK(adv(t) == doctest::Approx(rewards(t) + gamma * values(t + 1) - values(t)));
  }
  CHECK_THROWS(gae(rewards, values.head(5), dones, gamma, 0.0, &adv, &ret));
}

TEST_CASE("ppo gradients match central finite differences") {
  PpoConfig cfg;
  cfg.entropy_coef = 0.01;
  double worst = 0.0;
  for (uint64_t seed = 0; seed < 3; ++seed) {
    GradFixture fx(41 + seed);
    VectorXd ga, gc;
    ppo_loss_grad(fx.policy, fx.mb, cfg, &ga, &gc);

    for (const bool actor : {true, false}) {
      const VectorXd& grad = actor ? ga : gc;
      const VectorXd& base =
          actor ? fx.policy.actor_params() : fx.policy.critic_params();
      for (int i = 0; i < base.size(); ++i) {
        const double h = 1e-6 * std::max(1.0, std::abs(base(i)));
        const double up = loss_at(fx.policy, fx.mb, cfg, actor, i, base(i) + h);
        const double dn = loss_at(fx.policy, fx.mb, cfg, actor, i, base(i) - h);
        const double fd = (up - dn) / (2.0 * h);
        const double scale = std::max({std::abs(fd), std::abs(grad(i)), 1e-6});
        worst = std::max(worst, std::abs(fd - grad(i)) / scale);
      }
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("ppo: zero advantages and entropy coefficient zero the actor gradient") {
  GradFixture fx(53);
  fx.mb.advantages.setZero();
  PpoConfig cfg;
  cfg.entropy_coef = 0.0;
  VectorXd ga, gc;
  ppo_loss_grad(fx.policy, fx.mb, cfg, &ga, &gc);
  CHECK(ga.cwiseAbs().maxCoeff() == 0.0);
  CHECK(gc.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("ppo: fully clipped ratios contribute no surrogate gradient") {
  GradFixture fx(59);
  // Make every sample sit at the current mean, then claim the old policy
  // was twice as unlikely: ratio 2 lies outside the clip band and the
  // advantages are positive, so min() always picks the clipped branch.
  const MatrixXd mean = fx.policy.actor_mean_raw(fx.mb.obs);
  fx.mb.actions = mean;
  const VectorXd logp = gaussian_log_prob(mean, fx.policy.log_std(), fx.mb.actions);
  fx.mb.old_logp = logp.array() - std::log(2.0);
  fx.mb.advantages.setConstant(1.0);

  PpoConfig cfg;
  cfg.clip_eps = 0.2;
  cfg.entropy_coef = 0.0;
  VectorXd ga, gc;
  const LossTerms terms = ppo_loss_grad(fx.policy, fx.mb, cfg, &ga, &gc);
  CHECK(ga.cwiseAbs().maxCoeff() == 0.0);
  CHECK(terms.surrogate == doctest::Approx(-1.2));
}

TEST_CASE("ppo: a larger entropy coefficient never shrinks the std after one update") {
  GradFixture fx(61);
  PpoConfig lo, hi;
  lo.entropy_coef = 0.0;
  hi.entropy_coef = 0.1;

  Vec4 std_after[2];
  int k = 0;
  for (const PpoConfig* cfg : {&lo, &hi}) {
    Policy p = fx.policy;
    Adam opt(static_cast<int>(p.actor_params().size()), 3e-4);
    VectorXd ga, gc;
    ppo_loss_grad(p, fx.mb, *cfg, &ga, &gc);
    opt.step(p.actor_params(), ga);
    std_after[k++] = p.log_std().array().exp();
  }
  CHECK((std_after[1] - std_after[0]).minCoeff() >= -1e-12);
}

TEST_CASE("ppo: non-finite losses are reported with the offending term") {
  GradFixture fx(67);
  fx.mb.advantages(2) = std::numeric_limits<double>::quiet_NaN();
  PpoConfig cfg;
  VectorXd ga, gc;
  const LossTerms terms = ppo_loss_grad(fx.policy, fx.mb, cfg, &ga, &gc);
  CHECK(!terms.finite);
  CHECK(terms.bad_term == "surrogate");
}

TEST_CASE("adam: first step moves against the gradient sign at the learning rate") {
  Adam opt(3, 0.01);
  VectorXd params = VectorXd::Zero(3);
  VectorXd grad(3);
  grad << 1.0, -2.0, 0.5;
  opt.step(params, grad);
  CHECK(params(0) == doctest::Approx(-0.01).epsilon(1e-4));
  CHECK(params(1) == doctest::Approx(0.01).epsilon(1e-4));
  CHECK(params(2) == doctest::Approx(-0.01).epsilon(1e-4));
}

TEST_CASE("checkpoints round trip bitwise") {
  PhysParams phys;
  Policy policy(quiet_config(ActionSpace::kCtbr, 2, 3), phys, 8);
  policy.init(71, -0.9);
  const std::string path = temp_path("qb_policy_roundtrip.qbc");
  policy.save(path, "deadbeef");

  const Policy loaded = Policy::load(path);
  CHECK(bitwise_equal(loaded.actor_params(), policy.actor_params()));
  CHECK(bitwise_equal(loaded.critic_params(), policy.critic_params()));
  CHECK(loaded.hidden_width() == 8);
  CHECK(loaded.space() == ActionSpace::kCtbr);

  const VectorXd obs = VectorXd::Random(policy.state_dim() + policy.ref_dim());
  const VectorXd priv = VectorXd::Random(policy.priv_dim());
  const auto [m0, s0] = policy.actor_forward(obs);
  const auto [m1, s1] = loaded.actor_forward(obs);
  CHECK((m0 - m1).cwiseAbs().maxCoeff() == 0.0);
  CHECK((s0 - s1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(policy.value(obs, priv)(0) == loaded.value(obs, priv)(0));
  std::remove(path.c_str());

  const std::string bad = temp_path("qb_policy_bad.qbc");
  std::ofstream(bad) << "not a checkpoint";
  CHECK_THROWS(Policy::load(bad));
  std::remove(bad.c_str());
}

TEST_CASE("ppo config round trips and rejects invalid values") {
  PpoConfig cfg;
  cfg.gamma = 0.99;
  cfg.rollout_steps = 128;
  cfg.total_steps = 123456;
  Config store;
  cfg.to_config(store);
  const PpoConfig back = PpoConfig::from_config(store);
  CHECK(back.gamma == cfg.gamma);
  CHECK(back.actor_lr == cfg.actor_lr);
  CHECK(back.entropy_coef == cfg.entropy_coef);
  CHECK(back.clip_eps == cfg.clip_eps);
  CHECK(back.rollout_steps == 128);
  CHECK(back.total_steps == 123456);

  Config bad;
  bad.set_int("ppo.minibatch", 0);
  CHECK_THROWS(PpoConfig::from_config(bad));
  Config bad2;
  bad2.set_double("ppo.gamma", 1.5);
  CHECK_THROWS(PpoConfig::from_config(bad2));
}

TEST_CASE("training logs one curve row per iteration with a monotone step counter") {
  PhysParams phys;
  EnvConfig ecfg = quiet_config(ActionSpace::kCtbr);
  std::vector<Trajectory> trajs;
  trajs.push_back(hover_traj(phys, Vec3{0.0, 0.0, 2.0}, 2.0));

  Policy policy(ecfg, phys, 4);
  policy.init(97, -1.0);
  const VectorXd initial = policy.actor_params();

  PpoConfig cfg;
  cfg.num_agents = 3;
  cfg.rollout_steps = 8;
  cfg.epochs = 2;
  cfg.minibatch = 16;
  cfg.total_steps = 48;
  cfg.checkpoint_every = 0;

  int callbacks = 0;
  const TrainResult res =
      train_ppo(policy, phys, trajs, cfg, 1234,
                [&](const CurveRow& row) { ++callbacks; CHECK(row.iteration == callbacks); });

  REQUIRE(res.curve.size() == 2);
  CHECK(callbacks == 2);
  CHECK(res.curve[0].env_steps == 24);
  CHECK(res.curve[1].env_steps == 48);
  CHECK(res.env_steps == 48);
  CHECK(!res.diverged);
  CHECK(policy.actor_params().allFinite());
  CHECK(policy.critic_params().allFinite());
  CHECK(!bitwise_equal(policy.actor_params(), initial));
  CHECK(res.best_iteration >= 1);
}

TEST_CASE("training with zero total steps returns the initial parameters") {
  PhysParams phys;
  std::vector<Trajectory> trajs;
  trajs.push_back(hover_traj(phys, Vec3{0.0, 0.0, 2.0}, 1.0));
  Policy policy(quiet_config(ActionSpace::kCtbr), phys, 4);
  policy.init(101, -1.0);
  const VectorXd a0 = policy.actor_params(), c0 = policy.critic_params();

  PpoConfig cfg;
  cfg.num_agents = 2;
  cfg.rollout_steps = 4;
  cfg.total_steps = 0;
  const TrainResult res = train_ppo(policy, phys, trajs, cfg, 7);
  CHECK(res.curve.empty());
  CHECK(res.env_steps == 0);
  CHECK(bitwise_equal(policy.actor_params(), a0));
  CHECK(bitwise_equal(policy.critic_params(), c0));

  CHECK_THROWS(train_ppo(policy, phys, {}, cfg, 7));
}

TEST_CASE("training writes checkpoints at the configured cadence") {
  PhysParams phys;
  std::vector<Trajectory> trajs;
  trajs.push_back(hover_traj(phys, Vec3{0.0, 0.0, 2.0}, 2.0));
  Policy policy(quiet_config(ActionSpace::kCtbr), phys, 4);
  policy.init(103, -1.0);

  PpoConfig cfg;
  cfg.num_agents = 2;
  cfg.rollout_steps = 4;
  cfg.epochs = 1;
  cfg.minibatch = 8;
  cfg.total_steps = 16;
  cfg.checkpoint_every = 1;

  const std::string dir = temp_path("qb_ckpt_dir");
  std::filesystem::create_directories(dir);
  train_ppo(policy, phys, trajs, cfg, 5, {}, dir);

  for (const std::string name : {"checkpoint_1.qbc", "checkpoint_2.qbc", "checkpoint_final.qbc"}) {
    const std::string path = dir + "/" + name;
    REQUIRE(std::filesystem::exists(path));
    const Policy loaded = Policy::load(path);
    CHECK(loaded.actor_params().allFinite());
  }
  const Policy final_ckpt = Policy::load(dir + "/checkpoint_final.qbc");
  CHECK(bitwise_equal(final_ckpt.actor_params(), policy.actor_params()));
  std::filesystem::remove_all(dir);
}

TEST_CASE("training is reproducible from the seed") {
  PhysParams phys;
  std::vector<Trajectory> trajs;
  trajs.push_back(hover_traj(phys, Vec3{0.0, 0.0, 2.0}, 2.0));

  VectorXd results[2];
  std::vector<CurveRow> curves[2];
  for (int k = 0; k < 2; ++k) {
    Policy policy(quiet_config(ActionSpace::kCtbr), phys, 4);
    policy.init(7, -1.0);
    PpoConfig cfg;
    cfg.num_agents = 2;
    cfg.rollout_steps = 8;
    cfg.epochs = 2;
    cfg.minibatch = 8;
    cfg.total_steps = 32;
    const TrainResult res = train_ppo(policy, phys, trajs, cfg, 99);
    results[k] = policy.actor_params();
    curves[k] = res.curve;
  }
  CHECK(bitwise_equal(results[0], results[1]));
  REQUIRE(curves[0].size() == curves[1].size());
  for (size_t i = 0; i < curves[0].size(); ++i) {
    CHECK(curves[0][i].mean_return == curves[1][i].mean_return);
    CHECK(curves[0][i].mean_pos_error_cm == curves[1][i].mean_pos_error_cm);
  }
}

TEST_CASE("learning-curve files carry the documented header") {
  std::vector<CurveRow> rows(2);
  rows[0] = {1, 100, -5.25, 12.5, 0.25};
  rows[1] = {2, 200, -4.0, 11.0, 0.0};
  const std::string path = temp_path("qb_curve.csv");
  write_curve_csv(path, rows);

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "iteration,env_steps,mean_return,mean_pos_error_cm,crash_rate");
  std::getline(in, line);
  CHECK(line == "1,100,-5.25,12.5,0.25");
  std::getline(in, line);
  CHECK(line == "2,200,-4,11,0");
  CHECK(!std::getline(in, line));
  std::remove(path.c_str());
}

TEST_CASE("policy consumes environment observations directly") {
  PhysParams phys;
  EnvConfig ecfg = quiet_config(ActionSpace::kCtbr, 10, 10);
  Environment env(ecfg, phys);
  Trajectory traj = hover_traj(phys, Vec3{0.0, 0.0, 2.0}, 2.0);
  const Observation obs = env.reset(traj, 1);

  Policy policy(ecfg, phys, 8);
  policy.init(7, -1.0);
  CHECK(policy.state_dim() + policy.ref_dim() == obs.actor.size());
  CHECK(policy.priv_dim() == obs.privileged.size());

  const auto [mean, std] = policy.actor_forward(obs.actor);
  CHECK(mean.allFinite());
  const VectorXd v = policy.value(obs.actor, obs.privileged);
  CHECK(std::isfinite(v(0)));

  const StepResult sr = env.step(policy.to_command(Vec4::Zero()));
  CHECK(std::isfinite(sr.reward));
}
