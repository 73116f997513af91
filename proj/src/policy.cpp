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

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace quadbench {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

using WMap = Eigen::Map<MatrixXd>;
using WConstMap = Eigen::Map<const MatrixXd>;
using BMap = Eigen::Map<VectorXd>;
using BConstMap = Eigen::Map<const VectorXd>;

constexpr double kLog2Pi = 1.8378770664093453;  // ln(2*pi)

}  // namespace

Net::Net(std::vector<int> widths, bool linear_output)
    : widths_(std::move(widths)), linear_output_(linear_output) {
  if (widths_.size() < 2) throw std::runtime_error("net: needs at least one layer");
  int off = 0;
  for (size_t l = 0; l + 1 < widths_.size(); ++l) {
    w_off_.push_back(off);
    off += widths_[l] * widths_[l + 1];
    b_off_.push_back(off);
    off += widths_[l + 1];
  }
  count_ = off;
}

MatrixXd Net::forward(const double* params, const MatrixXd& x, Cache* cache) const {
  if (x.rows() != widths_.front()) throw std::runtime_error("net: input dim mismatch");
  if (cache) {
    cache->acts.clear();
    cache->acts.push_back(x);
  }
  MatrixXd h = x;
  const size_t layers = widths_.size() - 1;
  for (size_t l = 0; l < layers; ++l) {
    const WConstMap w(params + w_off_[l], widths_[l + 1], widths_[l]);
    const BConstMap b(params + b_off_[l], widths_[l + 1]);
    h = (w * h).colwise() + b;
    if (l + 1 < layers || !linear_output_) h = h.array().tanh();
    if (cache) cache->acts.push_back(h);
  }
  return h;
}

MatrixXd Net::backward(const double* params, const Cache& cache, const MatrixXd& dy,
                       double* grad) const {
  const size_t layers = widths_.size() - 1;
  MatrixXd delta = dy;
  for (size_t li = layers; li-- > 0;) {
    const bool activated = (li + 1 < layers) || !linear_output_;
    if (activated) {
      // d tanh(z) = 1 - tanh(z)^2, and acts holds tanh(z).
      delta = delta.cwiseProduct(
          (1.0 - cache.acts[li + 1].array().square()).matrix());
    }
    const WConstMap w(params + w_off_[li], widths_[li + 1], widths_[li]);
    WMap gw(grad + w_off_[li], widths_[li + 1], widths_[li]);
    BMap gb(grad + b_off_[li], widths_[li + 1]);
    gw.noalias() += delta * cache.acts[li].transpose();
    gb.noalias() += delta.rowwise().sum();
    delta = (w.transpose() * delta).eval();
  }
  return delta;
}

void Net::init(double* params, std::mt19937_64& rng, double hidden_gain,
               double output_gain) const {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const size_t layers = widths_.size() - 1;
  for (size_t l = 0; l < layers; ++l) {
    const int rows = widths_[l + 1];
    const int cols = widths_[l];
    const bool transpose = rows < cols;
    const int r = transpose ? cols : rows;
    const int c = transpose ? rows : cols;
    MatrixXd m(r, c);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) m(i, j) = gauss(rng);
    }
    Eigen::HouseholderQR<MatrixXd> qr(m);
    MatrixXd q = qr.householderQ() * MatrixXd::Identity(r, c);
    const MatrixXd rr = qr.matrixQR().topRows(c).triangularView<Eigen::Upper>();
    for (int j = 0; j < c; ++j) {
      if (rr(j, j) < 0.0) q.col(j) = -q.col(j);
    }
    const bool last = (l + 1 == layers) && linear_output_;
    const double gain = last ? output_gain : hidden_gain;
    WMap w(params + w_off_[l], rows, cols);
    w = gain * (transpose ? MatrixXd(q.transpose()) : q);
    BMap b(params + b_off_[l], rows);
    b.setZero();
  }
}

PpoConfig PpoConfig::from_config(const Config& cfg) {
  PpoConfig c;
  c.gamma = cfg.get_double("ppo.gamma", c.gamma);
  c.actor_lr = cfg.get_double("ppo.actor_lr", c.actor_lr);
  c.critic_lr = cfg.get_double("ppo.critic_lr", c.critic_lr);
  c.entropy_coef = cfg.get_double("ppo.entropy_coef", c.entropy_coef);
  c.clip_eps = cfg.get_double("ppo.clip_eps", c.clip_eps);
  c.gae_lambda = cfg.get_double("ppo.gae_lambda", c.gae_lambda);
  c.value_coef = cfg.get_double("ppo.value_coef", c.value_coef);
  c.initial_log_std = cfg.get_double("ppo.initial_log_std", c.initial_log_std);
  c.rollout_steps = cfg.get_int("ppo.rollout_steps", c.rollout_steps);
  c.num_agents = cfg.get_int("ppo.num_agents", c.num_agents);
  c.epochs = cfg.get_int("ppo.epochs", c.epochs);
  c.minibatch = cfg.get_int("ppo.minibatch", c.minibatch);
  c.total_steps = static_cast<long>(cfg.get_double("ppo.total_steps",
                                                   static_cast<double>(c.total_steps)));
  c.checkpoint_every = cfg.get_int("ppo.checkpoint_every", c.checkpoint_every);
  if (c.rollout_steps < 1 || c.num_agents < 1 || c.epochs < 1 || c.minibatch < 1) {
    throw std::runtime_error("ppo: rollout_steps, num_agents, epochs, minibatch must be >= 1");
  }
  if (c.gamma < 0.0 || c.gamma > 1.0 || c.gae_lambda < 0.0 || c.gae_lambda > 1.0) {
    throw std::runtime_error("ppo: gamma and gae_lambda must lie in [0, 1]");
  }
  return c;
}

void PpoConfig::to_config(Config& cfg) const {
  cfg.set_double("ppo.gamma", gamma);
  cfg.set_double("ppo.actor_lr", actor_lr);
  cfg.set_double("ppo.critic_lr", critic_lr);
  cfg.set_double("ppo.entropy_coef", entropy_coef);
  cfg.set_double("ppo.clip_eps", clip_eps);
  cfg.set_double("ppo.gae_lambda", gae_lambda);
  cfg.set_double("ppo.value_coef", value_coef);
  cfg.set_double("ppo.initial_log_std", initial_log_std);
  cfg.set_int("ppo.rollout_steps", rollout_steps);
  cfg.set_int("ppo.num_agents", num_agents);
  cfg.set_int("ppo.epochs", epochs);
  cfg.set_int("ppo.minibatch", minibatch);
  cfg.set_double("ppo.total_steps", static_cast<double>(total_steps));
  cfg.set_int("ppo.checkpoint_every", checkpoint_every);
}

Policy::Policy(const EnvConfig& env_cfg, const PhysParams& nominal, int hidden_width)
    : env_cfg_(env_cfg), width_(hidden_width) {
  if (hidden_width < 1) throw std::runtime_error("policy: hidden_width must be >= 1");
  space_ = env_cfg.action_space;
  CommandLimits limits = CommandLimits::from_params(nominal);
  limits.box(space_, &center_, &halfwidth_);
  build();
}

void Policy::build() {
  const int per_state = 16 + (env_cfg_.include_action_history ? 4 : 0);
  state_dim_ = env_cfg_.history_len * per_state;
  ref_dim_ = env_cfg_.reference_len * 18;
  priv_dim_ = privileged_obs_dim(env_cfg_);

  const int w = width_;
  a_state_ = Net({state_dim_, w, w, w}, false);
  a_ref_ = Net({ref_dim_, w, w, w}, false);
  a_head_ = Net({2 * w, 2 * w, 2 * w, 4}, true);
  c_state_ = Net({state_dim_ + priv_dim_, w, w, w}, false);
  c_ref_ = Net({ref_dim_, w, w, w}, false);
  c_head_ = Net({2 * w, 2 * w, 2 * w, 1}, true);

  log_std_off_ = a_state_.param_count() + a_ref_.param_count() + a_head_.param_count();
  actor_params_ = VectorXd::Zero(log_std_off_ + 4);
  critic_params_ =
      VectorXd::Zero(c_state_.param_count() + c_ref_.param_count() + c_head_.param_count());
}

void Policy::init(uint64_t seed, double initial_log_std) {
  std::mt19937_64 rng(seed);
  double* a = actor_params_.data();
  a_state_.init(a, rng, std::numbers::sqrt2, 1.0);
  a_ref_.init(a + a_state_.param_count(), rng, std::numbers::sqrt2, 1.0);
  // Small output gain keeps the initial mean near the box center.
  a_head_.init(a + a_state_.param_count() + a_ref_.param_count(), rng, std::numbers::sqrt2,
               0.01);
  actor_params_.segment<4>(log_std_off_).setConstant(initial_log_std);

  double* c = critic_params_.data();
  c_state_.init(c, rng, std::numbers::sqrt2, 1.0);
  c_ref_.init(c + c_state_.param_count(), rng, std::numbers::sqrt2, 1.0);
  c_head_.init(c + c_state_.param_count() + c_ref_.param_count(), rng, std::numbers::sqrt2,
               1.0);
}

void Policy::set_initial_mean(const Command& cmd) {
  const Vec4 raw = ((command_to_vec(cmd) - center_).cwiseQuotient(halfwidth_))
                       .cwiseMax(-1.0)
                       .cwiseMin(1.0);
  const auto& widths = a_head_.widths();
  const int out = widths.back();
  const int in = widths[widths.size() - 2];
  const int head_off = a_state_.param_count() + a_ref_.param_count();
  const int bias_off = head_off + a_head_.param_count() - out;
  actor_params_.segment(bias_off - in * out, in * out).setZero();
  actor_params_.segment(bias_off, out) = raw;
}

MatrixXd Policy::actor_mean_raw(const MatrixXd& obs) const {
  if (obs.rows() != state_dim_ + ref_dim_) {
    throw std::runtime_error("policy: actor observation dim mismatch");
  }
  const double* a = actor_params_.data();
  const MatrixXd s_code = a_state_.forward(a, obs.topRows(state_dim_));
  const MatrixXd r_code =
      a_ref_.forward(a + a_state_.param_count(), obs.bottomRows(ref_dim_));
  MatrixXd code(2 * width_, obs.cols());
  code.topRows(width_) = s_code;
  code.bottomRows(width_) = r_code;
  return a_head_.forward(a + a_state_.param_count() + a_ref_.param_count(), code);
}

Vec4 Policy::log_std() const { return actor_params_.segment<4>(log_std_off_); }

std::pair<Vec4, Vec4> Policy::actor_forward(const VectorXd& obs) const {
  const MatrixXd mean_raw = actor_mean_raw(obs);
  const Vec4 mean = center_ + halfwidth_.cwiseProduct(mean_raw.col(0));
  const Vec4 std = log_std().array().exp();
  return {mean, std};
}

std::pair<VectorXd, VectorXd> Policy::actor_encodings(const VectorXd& obs) const {
  const double* a = actor_params_.data();
  const MatrixXd s_code = a_state_.forward(a, obs.topRows(state_dim_));
  const MatrixXd r_code =
      a_ref_.forward(a + a_state_.param_count(), obs.bottomRows(ref_dim_));
  return {s_code.col(0), r_code.col(0)};
}

VectorXd Policy::value(const MatrixXd& obs, const MatrixXd& priv) const {
  if (obs.cols() != priv.cols() || priv.rows() != priv_dim_) {
    throw std::runtime_error("policy: privileged block dim mismatch");
  }
  MatrixXd s_in(state_dim_ + priv_dim_, obs.cols());
  s_in.topRows(state_dim_) = obs.topRows(state_dim_);
  s_in.bottomRows(priv_dim_) = priv;

  const double* c = critic_params_.data();
  const MatrixXd s_code = c_state_.forward(c, s_in);
  const MatrixXd r_code =
      c_ref_.forward(c + c_state_.param_count(), obs.bottomRows(ref_dim_));
  MatrixXd code(2 * width_, obs.cols());
  code.topRows(width_) = s_code;
  code.bottomRows(width_) = r_code;
  const MatrixXd v =
      c_head_.forward(c + c_state_.param_count() + c_ref_.param_count(), code);
  return v.transpose();
}

Command Policy::to_command(const Vec4& raw) const {
  const Vec4 clipped = raw.cwiseMax(-1.0).cwiseMin(1.0);
  return vec_to_command(space_, center_ + halfwidth_.cwiseProduct(clipped));
}

void Policy::save(const std::string& path, const std::string& config_hash) const {
  nlohmann::json header;
  header["action_space"] = to_string(space_);
  header["history_len"] = env_cfg_.history_len;
  header["reference_len"] = env_cfg_.reference_len;
  header["action_history"] = env_cfg_.include_action_history;
  header["privileged_gravity"] = env_cfg_.privileged_gravity;
  header["hidden_width"] = width_;
  header["box_center"] = {center_(0), center_(1), center_(2), center_(3)};
  header["box_halfwidth"] = {halfwidth_(0), halfwidth_(1), halfwidth_(2), halfwidth_(3)};
  header["scales"] = {{"position", kPosScale}, {"velocity", kVelScale}, {"bodyrate", kRateScale}};
  header["actor_count"] = actor_params_.size();
  header["critic_count"] = critic_params_.size();
  header["config_hash"] = config_hash;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("policy: cannot write checkpoint " + path);
  out << "QBCKPT1\n";
  const uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(actor_params_.data()),
            static_cast<std::streamsize>(actor_params_.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(critic_params_.data()),
            static_cast<std::streamsize>(critic_params_.size() * sizeof(double)));
  if (!out) throw std::runtime_error("policy: short write on checkpoint " + path);
}

Policy Policy::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("policy: cannot read checkpoint " + path);
  std::string magic(8, '\0');
  in.read(magic.data(), 8);
  if (magic != "QBCKPT1\n") throw std::runtime_error("policy: bad checkpoint magic");
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("policy: truncated checkpoint header");
  const nlohmann::json header = nlohmann::json::parse(text);

  Policy p;
  p.env_cfg_ = EnvConfig{};
  p.env_cfg_.history_len = header.at("history_len").get<int>();
  p.env_cfg_.reference_len = header.at("reference_len").get<int>();
  p.env_cfg_.include_action_history = header.at("action_history").get<bool>();
  p.env_cfg_.privileged_gravity = header.at("privileged_gravity").get<bool>();
  p.env_cfg_.action_space = action_space_from_string(header.at("action_space").get<std::string>());
  p.space_ = p.env_cfg_.action_space;
  p.width_ = header.at("hidden_width").get<int>();
  for (int i = 0; i < 4; ++i) {
    p.center_(i) = header.at("box_center").at(i).get<double>();
    p.halfwidth_(i) = header.at("box_halfwidth").at(i).get<double>();
  }
  p.build();
  if (p.actor_params_.size() != header.at("actor_count").get<long>() ||
      p.critic_params_.size() != header.at("critic_count").get<long>()) {
    throw std::runtime_error("policy: checkpoint shape mismatch");
  }
  in.read(reinterpret_cast<char*>(p.actor_params_.data()),
          static_cast<std::streamsize>(p.actor_params_.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(p.critic_params_.data()),
          static_cast<std::streamsize>(p.critic_params_.size() * sizeof(double)));
  if (!in) throw std::runtime_error("policy: truncated checkpoint parameters");
  return p;
}

VectorXd gaussian_log_prob(const MatrixXd& mean, const Vec4& log_std,
                           const MatrixXd& actions) {
  const Vec4 inv_std = (-log_std.array()).exp();
  VectorXd out(actions.cols());
  const double constant = -0.5 * 4.0 * kLog2Pi - log_std.sum();
  for (int b = 0; b < actions.cols(); ++b) {
    const Vec4 z = (actions.col(b) - mean.col(b)).cwiseProduct(inv_std);
    out(b) = constant - 0.5 * z.squaredNorm();
  }
  return out;
}

void gae(const VectorXd& rewards, const VectorXd& values, const std::vector<uint8_t>& dones,
         double gamma, double lambda, VectorXd* advantages, VectorXd* returns) {
  const long t_len = rewards.size();
  if (values.size() != t_len + 1 || static_cast<long>(dones.size()) != t_len) {
    throw std::runtime_error("gae: rewards/values/dones lengths disagree");
  }
  advantages->resize(t_len);
  returns->resize(t_len);
  double carry = 0.0;
  for (long t = t_len - 1; t >= 0; --t) {
    const double next_v = dones[t] ? 0.0 : values(t + 1);
    const double delta = rewards(t) + gamma * next_v - values(t);
    carry = delta + gamma * lambda * (dones[t] ? 0.0 : carry);
    (*advantages)(t) = carry;
    (*returns)(t) = carry + values(t);
  }
}

LossTerms ppo_loss_grad(const Policy& policy, const Minibatch& mb, const PpoConfig& cfg,
                        VectorXd* actor_grad, VectorXd* critic_grad) {
  const long batch = mb.obs.cols();
  LossTerms terms;
  actor_grad->setZero(policy.actor_params().size());
  critic_grad->setZero(policy.critic_params().size());

  const double* ap = policy.actor_params().data();
  const int as_n = policy.actor_state_net().param_count();
  const int ar_n = policy.actor_ref_net().param_count();

  // Actor forward with caches.
  const int w = policy.hidden_width();
  Net::Cache cs, cr, ch;
  const MatrixXd s_code =
      policy.actor_state_net().forward(ap, mb.obs.topRows(policy.state_dim()), &cs);
  const MatrixXd r_code = policy.actor_ref_net().forward(
      ap + as_n, mb.obs.bottomRows(policy.ref_dim()), &cr);
  MatrixXd code(2 * w, batch);
  code.topRows(w) = s_code;
  code.bottomRows(w) = r_code;
  const MatrixXd mean = policy.actor_head_net().forward(ap + as_n + ar_n, code, &ch);

  const Vec4 log_std = policy.log_std();
  const Vec4 inv_std = (-log_std.array()).exp();
  const Vec4 inv_var = inv_std.cwiseProduct(inv_std);

  const VectorXd logp = gaussian_log_prob(mean, log_std, mb.actions);

  // Clipped surrogate.
  double surr = 0.0;
  MatrixXd d_mean = MatrixXd::Zero(4, batch);
  Vec4 d_log_std = Vec4::Zero();
  for (long b = 0; b < batch; ++b) {
    const double ratio = std::exp(logp(b) - mb.old_logp(b));
    const double adv = mb.advantages(b);
    const double plain = ratio * adv;
    const double clipped =
        std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
    surr -= std::min(plain, clipped);
    if (plain <= clipped) {
      // The unclipped branch is active: gradient flows through the ratio.
      const double d_logp = -plain / static_cast<double>(batch);
      const Vec4 diff = mb.actions.col(b) - mean.col(b);
      d_mean.col(b) = d_logp * diff.cwiseProduct(inv_var);
      const Vec4 z2 = diff.cwiseProduct(inv_std).array().square();
      d_log_std += d_logp * (z2 - Vec4::Ones());
    }
  }
  surr /= static_cast<double>(batch);

  // Entropy bonus: H = sum(log_std) + 2 (1 + ln 2 pi), batch-independent.
  const double entropy = log_std.sum() + 2.0 * (1.0 + kLog2Pi);
  d_log_std -= cfg.entropy_coef * Vec4::Ones();

  // Backprop the actor.
  MatrixXd d_code =
      policy.actor_head_net().backward(ap + as_n + ar_n, ch, d_mean,
                                       actor_grad->data() + as_n + ar_n);
  policy.actor_state_net().backward(ap, cs, d_code.topRows(w), actor_grad->data());
  policy.actor_ref_net().backward(ap + as_n, cr, d_code.bottomRows(w),
                                  actor_grad->data() + as_n);
  actor_grad->segment<4>(policy.log_std_offset()) += d_log_std;

  // Critic forward/backward.
  const double* cp = policy.critic_params().data();
  const int cs_n = policy.critic_state_net().param_count();
  const int cr_n = policy.critic_ref_net().param_count();
  MatrixXd s_in(policy.state_dim() + policy.priv_dim(), batch);
  s_in.topRows(policy.state_dim()) = mb.obs.topRows(policy.state_dim());
  s_in.bottomRows(policy.priv_dim()) = mb.priv;
  Net::Cache ks, kr, kh;
  const MatrixXd vs_code = policy.critic_state_net().forward(cp, s_in, &ks);
  const MatrixXd vr_code = policy.critic_ref_net().forward(
      cp + cs_n, mb.obs.bottomRows(policy.ref_dim()), &kr);
  MatrixXd vcode(2 * w, batch);
  vcode.topRows(w) = vs_code;
  vcode.bottomRows(w) = vr_code;
  const MatrixXd v = policy.critic_head_net().forward(cp + cs_n + cr_n, vcode, &kh);

  const VectorXd v_err = v.transpose() - mb.returns;
  const double value_loss =
      cfg.value_coef * 0.5 * v_err.squaredNorm() / static_cast<double>(batch);
  MatrixXd dv(1, batch);
  dv.row(0) = (cfg.value_coef / static_cast<double>(batch)) * v_err.transpose();
  MatrixXd d_vcode =
      policy.critic_head_net().backward(cp + cs_n + cr_n, kh, dv,
                                        critic_grad->data() + cs_n + cr_n);
  policy.critic_state_net().backward(cp, ks, d_vcode.topRows(w), critic_grad->data());
  policy.critic_ref_net().backward(cp + cs_n, kr, d_vcode.bottomRows(w),
                                   critic_grad->data() + cs_n);

  terms.surrogate = surr;
  terms.value = value_loss;
  terms.entropy = entropy;
  terms.total = surr + value_loss - cfg.entropy_coef * entropy;
  if (!std::isfinite(surr)) {
    terms.finite = false;
    terms.bad_term = "surrogate";
  } else if (!std::isfinite(value_loss)) {
    terms.finite = false;
    terms.bad_term = "value";
  } else if (!std::isfinite(entropy)) {
    terms.finite = false;
    terms.bad_term = "entropy";
  } else if (!actor_grad->allFinite() || !critic_grad->allFinite()) {
    terms.finite = false;
    terms.bad_term = "gradient";
  }
  return terms;
}

Adam::Adam(int n, double lr) : lr_(lr), m_(VectorXd::Zero(n)), v_(VectorXd::Zero(n)) {}

void Adam::step(VectorXd& params, const VectorXd& grad) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params -= (lr_ / bc1) *
            m_.cwiseQuotient((v_ / bc2).cwiseSqrt() + VectorXd::Constant(m_.size(), eps_));
}

void write_curve_csv(const std::string& path, const std::vector<CurveRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write learning curve " + path);
  out << "iteration,env_steps,mean_return,mean_pos_error_cm,crash_rate\n";
  for (const CurveRow& r : rows) {
    out << r.iteration << ',' << r.env_steps << ',' << format_double(r.mean_return) << ','
        << format_double(r.mean_pos_error_cm) << ',' << format_double(r.crash_rate) << '\n';
  }
}

TrainResult train_ppo(Policy& policy, const PhysParams& nominal,
                      const std::vector<Trajectory>& trajs, const PpoConfig& cfg,
                      uint64_t seed, const std::function<void(const CurveRow&)>& on_iteration,
                      const std::string& checkpoint_dir) {
  if (trajs.empty()) throw std::runtime_error("train: empty trajectory set");
  const EnvConfig& ecfg = policy.env_config();
  const int agents = cfg.num_agents;
  const int t_len = cfg.rollout_steps;
  const long batch = static_cast<long>(agents) * t_len;
  const int obs_dim = policy.state_dim() + policy.ref_dim();
  const int priv_dim = policy.priv_dim();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<Environment> envs;
  envs.reserve(agents);
  for (int i = 0; i < agents; ++i) envs.emplace_back(ecfg, nominal);

  MatrixXd obs_cur(obs_dim, agents), priv_cur(priv_dim, agents);
  std::vector<double> ep_return(agents, 0.0);
  for (int i = 0; i < agents; ++i) {
    const Trajectory& tr = trajs[rng() % trajs.size()];
    const Observation o = envs[i].reset(tr, rng());
    obs_cur.col(i) = o.actor;
    priv_cur.col(i) = o.privileged;
  }

  // Rollout storage, column index t * agents + i.
  MatrixXd obs_buf(obs_dim, batch), priv_buf(priv_dim, batch), act_buf(4, batch);
  VectorXd logp_buf(batch), rew_buf(batch), val_buf(batch), boot_buf(batch);
  std::vector<uint8_t> done_buf(batch);
  VectorXd v_final(agents);

  TrainResult res;
  res.best_return = -std::numeric_limits<double>::infinity();

  Adam actor_opt(static_cast<int>(policy.actor_params().size()), cfg.actor_lr);
  Adam critic_opt(static_cast<int>(policy.critic_params().size()), cfg.critic_lr);
  VectorXd actor_grad, critic_grad;

  long steps_done = 0;
  int iter = 0;
  while (steps_done < cfg.total_steps && !res.diverged) {
    ++iter;
    std::vector<double> completed;
    int crashes = 0;
    double pos_err_sum = 0.0;
    long pos_err_count = 0;

    for (int t = 0; t < t_len; ++t) {
      const MatrixXd mean = policy.actor_mean_raw(obs_cur);
      const VectorXd vals = policy.value(obs_cur, priv_cur);
      const Vec4 sigma = policy.log_std().array().exp();

      MatrixXd actions(4, agents);
      for (int i = 0; i < agents; ++i) {
        for (int j = 0; j < 4; ++j) {
          actions(j, i) = mean(j, i) + sigma(j) * gauss(rng);
        }
      }
      const VectorXd logp = gaussian_log_prob(mean, policy.log_std(), actions);

      std::vector<int> terminal_agents;
      MatrixXd terminal_obs(obs_dim, agents), terminal_priv(priv_dim, agents);
      for (int i = 0; i < agents; ++i) {
        const long col = static_cast<long>(t) * agents + i;
        obs_buf.col(col) = obs_cur.col(i);
        priv_buf.col(col) = priv_cur.col(i);
        act_buf.col(col) = actions.col(i);
        logp_buf(col) = logp(i);
        val_buf(col) = vals(i);

        const StepResult sr = envs[i].step(policy.to_command(actions.col(i)));
        rew_buf(col) = sr.reward;
        done_buf[col] = sr.done ? 1 : 0;
        boot_buf(col) = 0.0;
        ep_return[i] += sr.reward;
        pos_err_sum += sr.info.position_error;
        ++pos_err_count;

        if (sr.done) {
          completed.push_back(ep_return[i]);
          ep_return[i] = 0.0;
          if (sr.crashed) {
            ++crashes;
          } else {
            // Time-limit truncation: bootstrap with the terminal value.
            terminal_obs.col(static_cast<int>(terminal_agents.size())) = sr.obs.actor;
            terminal_priv.col(static_cast<int>(terminal_agents.size())) = sr.obs.privileged;
            terminal_agents.push_back(static_cast<int>(col));
          }
          const Trajectory& tr = trajs[rng() % trajs.size()];
          const Observation o = envs[i].reset(tr, rng());
          obs_cur.col(i) = o.actor;
          priv_cur.col(i) = o.privileged;
        } else {
          obs_cur.col(i) = sr.obs.actor;
          priv_cur.col(i) = sr.obs.privileged;
        }
      }
      if (!terminal_agents.empty()) {
        const int n_term = static_cast<int>(terminal_agents.size());
        const VectorXd v_term =
            policy.value(terminal_obs.leftCols(n_term), terminal_priv.leftCols(n_term));
        for (int k = 0; k < n_term; ++k) boot_buf(terminal_agents[k]) = v_term(k);
      }
    }
    v_final = policy.value(obs_cur, priv_cur);
    steps_done += batch;

    // Advantages: GAE with per-step bootstrap values at terminations.
    VectorXd adv(batch), ret(batch);
    for (int i = 0; i < agents; ++i) {
      double carry = 0.0;
      for (int t = t_len - 1; t >= 0; --t) {
        const long col = static_cast<long>(t) * agents + i;
        double next_v;
        if (done_buf[col]) {
          next_v = boot_buf(col);
        } else {
          next_v = (t + 1 == t_len) ? v_final(i) : val_buf(static_cast<long>(t + 1) * agents + i);
        }
        const double delta = rew_buf(col) + cfg.gamma * next_v - val_buf(col);
        carry = delta + cfg.gamma * cfg.gae_lambda * (done_buf[col] ? 0.0 : carry);
        adv(col) = carry;
        ret(col) = carry + val_buf(col);
      }
    }
    const double adv_mean = adv.mean();
    const double adv_std =
        std::sqrt((adv.array() - adv_mean).square().sum() / static_cast<double>(batch));
    adv = (adv.array() - adv_mean) / (adv_std + 1e-8);

    // Clipped-objective updates; keep the pre-update iterate for recovery.
    const VectorXd saved_actor = policy.actor_params();
    const VectorXd saved_critic = policy.critic_params();
    std::vector<long> order(batch);
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs && !res.diverged; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (long start = 0; start < batch && !res.diverged; start += cfg.minibatch) {
        const long count = std::min<long>(cfg.minibatch, batch - start);
        Minibatch mb;
        mb.obs.resize(obs_dim, count);
        mb.priv.resize(priv_dim, count);
        mb.actions.resize(4, count);
        mb.old_logp.resize(count);
        mb.advantages.resize(count);
        mb.returns.resize(count);
        for (long k = 0; k < count; ++k) {
          const long src = order[start + k];
          mb.obs.col(k) = obs_buf.col(src);
          mb.priv.col(k) = priv_buf.col(src);
          mb.actions.col(k) = act_buf.col(src);
          mb.old_logp(k) = logp_buf(src);
          mb.advantages(k) = adv(src);
          mb.returns(k) = ret(src);
        }
        const LossTerms terms = ppo_loss_grad(policy, mb, cfg, &actor_grad, &critic_grad);
        if (!terms.finite) {
          res.diverged = true;
          res.divergence_reason = terms.bad_term;
          break;
        }
        actor_opt.step(policy.actor_params(), actor_grad);
        critic_opt.step(policy.critic_params(), critic_grad);
        if (!policy.actor_params().allFinite() || !policy.critic_params().allFinite()) {
          res.diverged = true;
          res.divergence_reason = "parameters";
          break;
        }
      }
    }
    if (res.diverged) {
      policy.actor_params() = saved_actor;
      policy.critic_params() = saved_critic;
    }

    CurveRow row;
    row.iteration = iter;
    row.env_steps = steps_done;
    if (!completed.empty()) {
      row.mean_return =
          std::accumulate(completed.begin(), completed.end(), 0.0) /
          static_cast<double>(completed.size());
      row.crash_rate = static_cast<double>(crashes) / static_cast<double>(completed.size());
    } else {
      row.mean_return =
          std::accumulate(ep_return.begin(), ep_return.end(), 0.0) / static_cast<double>(agents);
      row.crash_rate = 0.0;
    }
    row.mean_pos_error_cm = 100.0 * pos_err_sum / static_cast<double>(std::max(1L, pos_err_count));
    res.curve.push_back(row);
    if (on_iteration) on_iteration(row);
    if (row.mean_return > res.best_return) {
      res.best_return = row.mean_return;
      res.best_iteration = iter;
    }
    if (!checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
        iter % cfg.checkpoint_every == 0) {
      policy.save(checkpoint_dir + "/checkpoint_" + std::to_string(iter) + ".qbc");
    }
  }

  if (!checkpoint_dir.empty()) {
    policy.save(checkpoint_dir + "/checkpoint_final.qbc");
  }
  res.env_steps = steps_done;
  return res;
}

}  // namespace quadbench
