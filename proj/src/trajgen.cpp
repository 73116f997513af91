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

#include "quadbench/trajgen.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace quadbench {

namespace {

constexpr char kCsvHeader[] =
    "t,px,py,pz,vx,vy,vz,ax,ay,az,qw,qx,qy,qz,wx,wy,wz,u1,u2,u3,u4";

// Quintic smoothstep: C2, zero first and second derivatives at both ends.
double smooth5(double u) { return u * u * u * (10.0 + u * (-15.0 + 6.0 * u)); }
double smooth5_d1(double u) { return u * u * (30.0 + u * (-60.0 + 30.0 * u)); }
double smooth5_d2(double u) { return u * (60.0 + u * (-180.0 + 120.0 * u)); }
// Integral of smooth5 from 0 to u.
double smooth5_int(double u) { return u * u * u * u * (2.5 + u * (-3.0 + u)); }

uint64_t mix_seed(uint64_t seed, uint64_t index) {
  uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// State/action reference from a single flat-output sample, without the
// torque feed-forward (which needs neighboring samples).
ReferencePoint flat_to_state(const FlatOutput& f, const PhysParams& params, double t) {
  ReferencePoint rp;
  rp.t = t;
  rp.p = f.p;
  rp.v = f.v;
  rp.a = f.a;
  rp.yaw_rate = f.yaw_rate;

  const Vec3 thrust_acc = f.a - params.gravity;
  const double c = thrust_acc.norm();
  if (c < 1e-6) {
    throw std::runtime_error("flatness map: free-fall reference (thrust demand ~ 0)");
  }
  rp.collective = c;

  const Vec3 z_b = thrust_acc / c;
  const Vec3 x_c{std::cos(f.yaw), std::sin(f.yaw), 0.0};
  Vec3 n = z_b.cross(x_c);
  const double n_norm = n.norm();
  if (n_norm < 1e-9) {
    throw std::runtime_error("flatness map: thrust direction parallel to yaw heading");
  }
  const Vec3 y_b = n / n_norm;
  const Vec3 x_b = y_b.cross(z_b);
  Mat3 R;
  R.col(0) = x_b;
  R.col(1) = y_b;
  R.col(2) = z_b;
  rp.q = rotmat_to_quat(R);

  // dz_b/dt is the thrust-orthogonal part of jerk over c.
  const Vec3 z_b_dot = (f.j - z_b.dot(f.j) * z_b) / c;
  rp.omega.x() = -y_b.dot(f.j) / c;
  rp.omega.y() = x_b.dot(f.j) / c;
  const Vec3 y_c{-std::sin(f.yaw), std::cos(f.yaw), 0.0};
  rp.omega.z() = -x_b.dot(z_b_dot.cross(x_c) + f.yaw_rate * z_b.cross(y_c)) / n_norm;
  return rp;
}

}  // namespace

CircleSignal::CircleSignal(const Vec3& center, double radius, double inclination, double speed,
                           double duration_s, double ramp_time, double accel_limit)
    : center_(center), radius_(radius), speed_(speed), duration_(duration_s), ramp_(ramp_time) {
  if (radius <= 0.0) throw std::runtime_error("circle: radius must be positive");
  if (speed < 0.0) throw std::runtime_error("circle: speed must be non-negative");
  const double centripetal = speed * speed / radius;
  if (centripetal > accel_limit) {
    std::ostringstream msg;
    msg << "circle: required centripetal acceleration " << centripetal
        << " m/s^2 exceeds the limit " << accel_limit;
    throw std::runtime_error(msg.str());
  }
  tilt_ = quat_to_rotmat(Quat::from_axis_angle(Vec3::UnitX(), inclination));
}

FlatOutput CircleSignal::sample(double t) const {
  // Arc length and its time derivatives under the speed ramp.
  double arc, sd, sdd, sddd;
  if (ramp_ > 0.0 && t < ramp_) {
    const double u = t / ramp_;
    arc = speed_ * ramp_ * smooth5_int(u);
    sd = speed_ * smooth5(u);
    sdd = speed_ * smooth5_d1(u) / ramp_;
    sddd = speed_ * smooth5_d2(u) / (ramp_ * ramp_);
  } else {
    const double ramped = ramp_ > 0.0 ? speed_ * ramp_ * 0.5 : 0.0;
    arc = ramped + speed_ * (t - ramp_ * (ramp_ > 0.0 ? 1.0 : 0.0));
    sd = speed_;
    sdd = 0.0;
    sddd = 0.0;
  }

  const double phi = arc / radius_;
  const double pd = sd / radius_;
  const double pdd = sdd / radius_;
  const double pddd = sddd / radius_;
  const double c = std::cos(phi), s = std::sin(phi);

  const Vec3 e_r{c, s, 0.0};   // radial
  const Vec3 e_t{-s, c, 0.0};  // tangential

  FlatOutput out;
  out.p = center_ + tilt_ * (radius_ * e_r);
  out.v = tilt_ * (radius_ * pd * e_t);
  out.a = tilt_ * (radius_ * (pdd * e_t - pd * pd * e_r));
  out.j = tilt_ * (radius_ * ((pddd - pd * pd * pd) * e_t - 3.0 * pd * pdd * e_r));

  // Coordinated turn: yaw follows the direction of travel (well-defined from
  // the tangent even while the ramp still has zero speed).
  const Vec3 d = tilt_ * e_t;
  const Vec3 dp = tilt_ * (-e_r);  // d(d)/d(phi)
  out.yaw = std::atan2(d.y(), d.x());
  const double h2 = d.x() * d.x() + d.y() * d.y();
  out.yaw_rate = (d.x() * dp.y() - d.y() * dp.x()) / h2 * pd;
  return out;
}

EssRandomSignal::EssRandomSignal(int num_harmonics, double base_period, double amplitude,
                                 double length_scale, uint64_t seed, const Vec3& center,
                                 double duration_s)
    : center_(center), duration_(duration_s) {
  if (base_period <= 0.0) throw std::runtime_error("random signal: base period must be positive");

  // Harmonic variances from the periodic exponential-sine-squared spectrum:
  // exp(cos(x)/l^2) expands with modified-Bessel coefficients I_k(1/l^2).
  const double z = 1.0 / (length_scale * length_scale);
  std::vector<double> weight(num_harmonics);
  double total = 0.0;
  for (int k = 1; k <= num_harmonics; ++k) {
    weight[k - 1] = std::cyl_bessel_i(static_cast<double>(k), z);
    total += weight[k - 1];
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  const double axis_scale[3] = {1.0, 1.0, 0.5};  // keep the altitude band tighter

  for (int axis = 0; axis < 3; ++axis) {
    axes_[axis].reserve(num_harmonics);
    for (int k = 1; k <= num_harmonics; ++k) {
      Harmonic h;
      h.amp = amplitude * axis_scale[axis] * gauss(rng) * std::sqrt(weight[k - 1] / total);
      h.omega = 2.0 * M_PI * k / base_period;
      h.phase = phase(rng);
      axes_[axis].push_back(h);
    }
  }
}

void EssRandomSignal::rescale(double factor) {
  for (auto& axis : axes_) {
    for (auto& h : axis) h.amp *= factor;
  }
}

FlatOutput EssRandomSignal::sample(double t) const {
  FlatOutput out;
  out.p = center_;
  for (int axis = 0; axis < 3; ++axis) {
    for (const Harmonic& h : axes_[axis]) {
      const double ph = h.omega * t + h.phase;
      const double sn = std::sin(ph), cs = std::cos(ph);
      out.p(axis) += h.amp * sn;
      out.v(axis) += h.amp * h.omega * cs;
      out.a(axis) -= h.amp * h.omega * h.omega * sn;
      out.j(axis) -= h.amp * h.omega * h.omega * h.omega * cs;
    }
  }
  return out;
}

ReferencePoint flatness_map(const FlatSignal& sig, const PhysParams& params, double t) {
  ReferencePoint rp = flat_to_state(sig.sample(t), params, t);

  // Rigid-body torque feed-forward. The angular acceleration comes from a
  // central difference of the analytic bodyrates, so no snap is needed.
  const double h = 1e-4;
  const double t0 = std::max(0.0, t - h);
  const double t1 = std::min(sig.duration(), t + h);
  Vec3 omega_dot = Vec3::Zero();
  if (t1 > t0) {
    const Vec3 w0 = flat_to_state(sig.sample(t0), params, t0).omega;
    const Vec3 w1 = flat_to_state(sig.sample(t1), params, t1).omega;
    omega_dot = (w1 - w0) / (t1 - t0);
  }
  const Vec3 J = params.inertia;
  const Vec3 Jw = J.cwiseProduct(rp.omega);
  const Vec3 tau = J.cwiseProduct(omega_dot) + rp.omega.cross(Jw);

  rp.u_srt = Mixer(params).allocate(params.mass * rp.collective, tau).thrust;
  return rp;
}

Trajectory Trajectory::from_signal(const FlatSignal& sig, const PhysParams& params, uint64_t seed,
                                   double dt) {
  Trajectory traj;
  traj.dt_ = dt;
  const int n = static_cast<int>(std::round(sig.duration() / dt));
  traj.points_.reserve(n + 1);
  for (int k = 0; k <= n; ++k) {
    ReferencePoint rp = flatness_map(sig, params, k * dt);
    rp.t = k * dt;
    if (k > 0 && traj.points_.back().q.dot(rp.q) < 0.0) {
      rp.q = -rp.q;  // keep the sampled quaternion track continuous
    }
    traj.points_.push_back(rp);
  }
  traj.meta_ = traj_metrics(traj);
  traj.meta_.seed = seed;
  return traj;
}

ReferencePoint Trajectory::at(double t) const {
  if (points_.empty()) throw std::runtime_error("trajectory: empty");
  if (t <= points_.front().t) return points_.front();
  if (t >= points_.back().t) return points_.back();
  const double idx = (t - points_.front().t) / dt_;
  const int i = std::min(static_cast<int>(idx), static_cast<int>(points_.size()) - 2);
  const double s = idx - i;
  const ReferencePoint& a = points_[i];
  const ReferencePoint& b = points_[i + 1];

  ReferencePoint out;
  out.t = t;
  out.p = (1.0 - s) * a.p + s * b.p;
  out.v = (1.0 - s) * a.v + s * b.v;
  out.a = (1.0 - s) * a.a + s * b.a;
  out.omega = (1.0 - s) * a.omega + s * b.omega;
  out.u_srt = (1.0 - s) * a.u_srt + s * b.u_srt;
  out.collective = (1.0 - s) * a.collective + s * b.collective;
  out.yaw_rate = (1.0 - s) * a.yaw_rate + s * b.yaw_rate;
  const double sign = a.q.dot(b.q) >= 0.0 ? 1.0 : -1.0;
  out.q = (a.q * (1.0 - s) + b.q * (sign * s)).normalized();
  return out;
}

void Trajectory::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trajectory file: " + path);
  out << kCsvHeader << "\n";
  for (const ReferencePoint& rp : points_) {
    const double row[21] = {rp.t,        rp.p.x(),     rp.p.y(),     rp.p.z(),    rp.v.x(),
                            rp.v.y(),    rp.v.z(),     rp.a.x(),     rp.a.y(),    rp.a.z(),
                            rp.q.w,      rp.q.x,       rp.q.y,       rp.q.z,      rp.omega.x(),
                            rp.omega.y(), rp.omega.z(), rp.u_srt(0),  rp.u_srt(1), rp.u_srt(2),
                            rp.u_srt(3)};
    for (int i = 0; i < 21; ++i) {
      if (i) out << ',';
      out << format_double(row[i]);
    }
    out << "\n";
  }
}

Trajectory Trajectory::read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read trajectory file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw std::runtime_error("trajectory file " + path + ": unexpected header");
  }

  Trajectory traj;
  const Vec3 g{0.0, 0.0, -9.81};  // nominal gravity for the derived fields
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    double col[21];
    std::string cell;
    for (int i = 0; i < 21; ++i) {
      if (!std::getline(ss, cell, ',')) {
        throw std::runtime_error("trajectory file " + path + ": short row at line " +
                                 std::to_string(lineno));
      }
      col[i] = std::stod(cell);
    }
    ReferencePoint rp;
    rp.t = col[0];
    rp.p = Vec3{col[1], col[2], col[3]};
    rp.v = Vec3{col[4], col[5], col[6]};
    rp.a = Vec3{col[7], col[8], col[9]};
    rp.q = Quat{col[10], col[11], col[12], col[13]};
    rp.omega = Vec3{col[14], col[15], col[16]};
    rp.u_srt = Vec4{col[17], col[18], col[19], col[20]};
    rp.collective = (rp.a - g).norm();
    rp.yaw_rate = quat_rotate(rp.q, rp.omega).z();
    traj.points_.push_back(rp);
  }
  if (traj.points_.size() < 2) {
    throw std::runtime_error("trajectory file " + path + ": needs at least two samples");
  }
  traj.dt_ = traj.points_[1].t - traj.points_[0].t;
  traj.meta_ = traj_metrics(traj);
  return traj;
}

void Trajectory::write_meta(const std::string& path) const {
  Config cfg;
  cfg.set_double("traj.v_max", meta_.v_max);
  cfg.set_double("traj.c_max", meta_.c_max);
  cfg.set_double("traj.omega_max", meta_.omega_max);
  cfg.set_int("traj.seed", static_cast<int>(meta_.seed));
  cfg.set_double("traj.duration", duration());
  cfg.set_double("traj.dt", dt_);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trajectory metadata: " + path);
  out << cfg.to_string();
}

TrajMeta traj_metrics(const Trajectory& traj) {
  TrajMeta m;
  m.seed = traj.metadata().seed;
  for (const ReferencePoint& rp : traj.points()) {
    m.v_max = std::max(m.v_max, rp.v.norm());
    m.c_max = std::max(m.c_max, rp.collective);
    m.omega_max = std::max(m.omega_max, rp.omega.norm());
  }
  return m;
}

Feasibility validate(const Trajectory& traj, const TrajLimits& limits) {
  Feasibility verdict;
  const TrajMeta m = traj_metrics(traj);
  std::ostringstream msg;
  if (m.v_max > limits.v_max) {
    msg << "velocity " << m.v_max << " m/s exceeds the " << limits.v_max << " m/s limit";
  } else {
    double a_max = 0.0;
    for (const ReferencePoint& rp : traj.points()) a_max = std::max(a_max, rp.a.norm());
    if (a_max > limits.a_max) {
      msg << "acceleration " << a_max << " m/s^2 exceeds the " << limits.a_max << " m/s^2 limit";
    } else {
      for (const ReferencePoint& rp : traj.points()) {
        if (rp.u_srt.minCoeff() < -1e-9 || rp.u_srt.maxCoeff() > limits.f_max + 1e-9) {
          msg << "rotor thrust " << rp.u_srt.maxCoeff() << " N at t=" << rp.t
              << " outside [0, " << limits.f_max << "]";
          break;
        }
      }
    }
  }
  verdict.violation = msg.str();
  verdict.ok = verdict.violation.empty();
  return verdict;
}

namespace {

Trajectory make_circle_traj(double speed, double radius, double incl, double ramp,
                            double duration, const PhysParams& params, uint64_t seed) {
  const TrajLimits limits{20.0, 35.0, params.max_rotor_thrust};
  double v = speed;
  for (int attempt = 0; attempt < 40; ++attempt) {
    const double cz = 1.2 + radius * std::sin(incl) + radius * 0.05;
    const CircleSignal sig(Vec3{0.0, 0.0, cz}, radius, incl, v, duration, ramp, limits.a_max);
    Trajectory traj = Trajectory::from_signal(sig, params, seed);
    if (validate(traj, limits).ok) return traj;
    v *= 0.85;
  }
  throw std::runtime_error("circle generator failed to find a feasible speed");
}

Trajectory make_ess_traj(double v_target, double a_target, int harmonics, double period,
                         double length_scale, double duration, const PhysParams& params,
                         uint64_t seed) {
  const TrajLimits limits{20.0, 35.0, params.max_rotor_thrust};
  // Build at unit amplitude, measure, and rescale: derivatives are linear in
  // the amplitude, so the retarget is exact.
  EssRandomSignal probe(harmonics, period, 1.0, length_scale, seed, Vec3::Zero(), duration);
  double v0 = 1e-12, a0 = 1e-12;
  for (double t = 0.0; t <= duration; t += 0.02) {
    const FlatOutput f = probe.sample(t);
    v0 = std::max(v0, f.v.norm());
    a0 = std::max(a0, f.a.norm());
  }
  double scale = std::min(v_target / v0, a_target / a0);
  for (int attempt = 0; attempt < 40; ++attempt) {
    EssRandomSignal sig(harmonics, period, 1.0, length_scale, seed, Vec3::Zero(), duration);
    sig.rescale(scale);
    // Keep the flight volume above the ground.
    double min_z = 1e9;
    for (double t = 0.0; t <= duration; t += 0.02) min_z = std::min(min_z, sig.sample(t).p.z());
    EssRandomSignal lifted(harmonics, period, 1.0, length_scale, seed,
                           Vec3{0.0, 0.0, 1.2 - min_z}, duration);
    lifted.rescale(scale);
    Trajectory traj = Trajectory::from_signal(lifted, params, seed);
    if (validate(traj, limits).ok) return traj;
    scale *= 0.85;
  }
  throw std::runtime_error("random-signal generator failed to find a feasible amplitude");
}

}  // namespace

std::vector<Trajectory> make_training_set(int count, uint64_t seed, const PhysParams& params) {
  std::vector<Trajectory> out;
  out.reserve(count);
  const int half = (count + 1) / 2;
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(mix_seed(seed, i));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    if (i % 2 == 0) {
      // Circles: stratified target speed over (0, 20], aggressiveness
      // growing with speed so the fast end approaches the thrust envelope.
      const double frac = (i / 2 + 0.5) / half;
      const double v = 0.2 + 19.8 * frac;
      const double a_c = std::max(0.4, 1.0 + 31.0 * std::pow(frac, 1.5));
      const double radius = std::clamp(v * v / a_c, 0.5, 30.0);
      const double incl = 0.45 * u01(rng);
      const double lap = 2.0 * M_PI * radius / std::max(v, 0.1);
      const double duration = std::clamp(2.0 + 2.0 * lap, 6.0, 12.0);
      out.push_back(make_circle_traj(v, radius, incl, 2.0, duration, params, mix_seed(seed, i)));
    } else {
      // Random smooth signals: stratified speed targets with varied shape.
      const double frac = (i / 2 + 0.5) / (count - half);
      const double v_target = 0.3 + 15.0 * frac;
      const double a_target = std::min(34.0, 4.0 + 30.0 * frac);
      const double period = 4.0 + 4.0 * u01(rng);
      const double length_scale = 0.6 + 0.9 * u01(rng);
      out.push_back(make_ess_traj(v_target, a_target, 8, period, length_scale,
                                  std::clamp(period, 6.0, 10.0), params, mix_seed(seed, i)));
    }
  }
  return out;
}

Trajectory make_named_trajectory(const std::string& name, const PhysParams& params) {
  if (name == "hover") {
    const HoverSignal sig(Vec3{0.0, 0.0, 1.5}, 6.0);
    return Trajectory::from_signal(sig, params);
  }
  if (name == "circle_slow") return make_circle_traj(2.0, 5.0, 0.0, 2.0, 10.0, params, 1);
  if (name == "circle_r5_v5") return make_circle_traj(5.0, 5.0, 0.0, 2.0, 10.0, params, 2);
  if (name == "circle_aggressive") return make_circle_traj(8.5, 3.0, 0.0, 2.0, 8.0, params, 3);
  if (name == "circle_steady") {
    // No ramp: the initial reference is already on the moving circle.
    return make_circle_traj(4.0, 4.0, 0.0, 0.0, 8.0, params, 4);
  }
  if (name == "random_slow") return make_ess_traj(2.0, 6.0, 8, 6.0, 1.2, 8.0, params, 5);
  if (name == "random_fast") return make_ess_traj(6.0, 14.0, 8, 5.0, 1.0, 8.0, params, 6);
  if (name == "race") return make_circle_traj(17.0, 9.0, 0.25, 2.5, 10.0, params, 7);
  throw std::runtime_error("unknown trajectory name '" + name + "'");
}

std::vector<std::string> named_trajectory_list() {
  return {"hover",         "circle_slow", "circle_r5_v5", "circle_aggressive",
          "circle_steady", "random_slow", "random_fast",  "race"};
}

}  // namespace quadbench
