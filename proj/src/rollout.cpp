#include "toppquad/rollout.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "toppquad/errors.hpp"

namespace toppquad {

void ControllerGains::Validate() const {
  for (const Vec3* g : {&kp, &kd, &kr, &kw})
    if (!(g->minCoeff() > 0.0)) throw ConfigError("controller gains must be positive");
}

void RolloutOptions::Validate() const {
  if (!(sim_dt > 0.0)) throw ConfigError("sim_dt must be positive");
  if (!(settle_window >= 0.0) || !(settle_hold >= 0.0))
    throw ConfigError("settling times must be non-negative");
  if (!(settle_position > 0.0) || !(settle_velocity > 0.0))
    throw ConfigError("settling thresholds must be positive");
  if (!(divergence_factor > 0.0)) throw ConfigError("divergence_factor must be positive");
}

ReferenceSample ReferenceAt(const TimedTrajectory& traj, int index) {
  ReferenceSample r;
  r.position = traj.position[index];
  r.velocity = traj.velocity[index];
  r.acceleration = traj.acceleration[index];
  const Mat3 rot = RotationMatrix(traj.attitude[index]);
  r.yaw = std::atan2(rot(1, 0), rot(0, 0));
  r.body_rate = traj.body_rate[index];
  return r;
}

Se3Controller::Se3Controller(const QuadParams& params, const ControllerGains& gains)
    : params_(params), gains_(gains) {
  gains_.Validate();
}

MotorThrusts Se3Controller::Update(const RigidState& state, const ReferenceSample& ref,
                                   bool* clamped) {
  const Mat3 r = RotationMatrix(state.attitude);
  const Vec3 ep = state.position - ref.position;
  const Vec3 ev = state.velocity - ref.velocity;
  const Vec3 acc = ref.acceleration - gains_.kp.cwiseProduct(ep) - gains_.kd.cwiseProduct(ev) -
                   params_.gravity;
  const double norm = acc.norm();
  if (norm > 1e-9) {
    const Vec3 b3 = acc / norm;
    const Vec3 heading(std::cos(ref.yaw), std::sin(ref.yaw), 0.0);
    const Vec3 b2 = b3.cross(heading);
    if (b2.norm() > 1e-9) {
      desired_.col(1) = b2.normalized();
      desired_.col(0) = desired_.col(1).cross(b3);
      desired_.col(2) = b3;
    }
  }

  Wrench w;
  w.thrust = params_.mass * acc.dot(r.col(2));
  const Vec3 er = 0.5 * Vee(desired_.transpose() * r - r.transpose() * desired_);
  const Vec3 ew = state.body_rate - r.transpose() * desired_ * ref.body_rate;
  const Vec3 alpha = -gains_.kr.cwiseProduct(er) - gains_.kw.cwiseProduct(ew);
  w.torque = params_.inertia * alpha + state.body_rate.cross(params_.inertia * state.body_rate);

  const MotorThrusts raw = InvertAllocation(w, params_);
  const MotorThrusts u = raw.cwiseMax(params_.u_min).cwiseMin(params_.u_max);
  if (clamped) *clamped = (u - raw).cwiseAbs().maxCoeff() > 0.0;
  return u;
}

RigidState Propagate(const RigidState& state, const MotorThrusts& u, const QuadParams& params,
                     double duration, double dt) {
  const int steps = std::max(1, static_cast<int>(std::ceil(duration / dt - 1e-9)));
  const double h = duration / steps;
  RigidState s = state;
  for (int k = 0; k < steps; ++k) {
    s = Rk4Step(s, u, params, h);
    s.attitude.normalize();
  }
  return s;
}

namespace {

// Reference position and velocity at t, linear between samples.
void Interpolate(const TimedTrajectory& traj, double t, Vec3& p, Vec3& v) {
  const auto it = std::upper_bound(traj.t.begin(), traj.t.end(), t);
  if (it == traj.t.begin()) {
    p = traj.position.front();
    v = traj.velocity.front();
    return;
  }
  if (it == traj.t.end()) {
    p = traj.position.back();
    v = traj.velocity.back();
    return;
  }
  const int i = static_cast<int>(it - traj.t.begin()) - 1;
  const double w = (t - traj.t[i]) / (traj.t[i + 1] - traj.t[i]);
  p = (1.0 - w) * traj.position[i] + w * traj.position[i + 1];
  v = (1.0 - w) * traj.velocity[i] + w * traj.velocity[i + 1];
}

double PathScale(const TimedTrajectory& traj) {
  Vec3 lo = traj.position.front(), hi = lo;
  for (const Vec3& p : traj.position) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return std::max(1.0, (hi - lo).norm());
}

}  // namespace

RolloutLog Simulate(const TimedTrajectory& traj, const QuadParams& params,
                    const ControllerGains& gains, const RolloutOptions& options) {
  options.Validate();
  if (traj.size() == 0) throw ConfigError("cannot simulate an empty trajectory");
  traj.Validate();
  const double period = traj.size() > 1 ? traj.t[1] - traj.t[0] : 0.01;
  if (options.sim_dt > period * (1.0 + 1e-9))
    throw ConfigError("sim_dt exceeds the reference sample period");
  const int substeps = std::max(1, static_cast<int>(std::lround(period / options.sim_dt)));
  const double h = period / substeps;

  RolloutLog log;
  log.reference_duration = traj.t.back();
  log.path_scale = PathScale(traj);
  const double end = log.reference_duration + options.settle_window;

  Se3Controller controller(params, gains);
  RigidState s;
  s.position = traj.position[0];
  s.velocity = traj.velocity[0];
  s.attitude = traj.attitude[0].normalized();
  s.body_rate = traj.body_rate[0];
  if (options.initial) s = *options.initial;

  int index = 0;
  double settled_since = -1.0;
  for (long step = 0;; ++step) {
    const double t = step * h;
    MotorThrusts u = log.command.empty() ? MotorThrusts::Zero() : log.command.back();
    if (step % substeps == 0) {
      while (index + 1 < traj.size() && traj.t[index + 1] <= t + 1e-9 * period) ++index;
      bool clamped = false;
      u = controller.Update(s, ReferenceAt(traj, index), &clamped);
      ++log.control_steps;
      if (clamped) ++log.clamped_steps;
    }

    Vec3 rp, rv;
    Interpolate(traj, t, rp, rv);
    const double ep = (s.position - rp).norm(), ev = (s.velocity - rv).norm();
    log.t.push_back(t);
    log.state.push_back(s);
    log.ref_position.push_back(rp);
    log.ref_velocity.push_back(rv);
    log.command.push_back(u);
    log.position_error.push_back(ep);
    log.velocity_error.push_back(ev);

    if (!std::isfinite(ep) || ep > options.divergence_factor * log.path_scale) {
      log.diverged = true;
      break;
    }
    if (t >= log.reference_duration) {
      if (ep < options.settle_position && ev < options.settle_velocity) {
        if (settled_since < 0.0) settled_since = t;
        if (t - settled_since >= options.settle_hold - 1e-12) {
          log.settled = true;
          log.settle_time = settled_since;
          break;
        }
      } else {
        settled_since = -1.0;
      }
    }
    if (t >= end - 1e-12) break;
    s = Rk4Step(s, u, params, h);
    s.attitude.normalize();
  }
  return log;
}

RolloutMetrics Summarize(const RolloutLog& log) {
  RolloutMetrics m;
  m.diverged = log.diverged;
  m.settled = log.settled;
  m.settle_time = log.settle_time;
  if (log.size() == 0) return m;
  m.duration = log.t.back();
  m.final_position_error = log.position_error.back();
  m.clamp_fraction =
      log.control_steps ? static_cast<double>(log.clamped_steps) / log.control_steps : 0.0;
  int count = 0;
  for (int i = 0; i < log.size() && log.t[i] <= log.reference_duration + 1e-12; ++i) {
    m.max_position_error = std::max(m.max_position_error, log.position_error[i]);
    m.mean_position_error += log.position_error[i];
    ++count;
  }
  if (count) m.mean_position_error /= count;
  return m;
}

void ExportRolloutCsv(const RolloutLog& log, const std::string& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot open " + file + " for writing");
  out << "t,x,y,z,vx,vy,vz,qw,qx,qy,qz,wx,wy,wz,ref_x,ref_y,ref_z,ref_vx,ref_vy,ref_vz,"
         "u1,u2,u3,u4,position_error,velocity_error\n";
  char buf[32];
  auto put = [&](double x, bool first = false) {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    if (!first) out << ',';
    out << buf;
  };
  for (int i = 0; i < log.size(); ++i) {
    const RigidState& s = log.state[i];
    put(log.t[i], true);
    for (int k = 0; k < 3; ++k) put(s.position(k));
    for (int k = 0; k < 3; ++k) put(s.velocity(k));
    for (int k = 0; k < 4; ++k) put(s.attitude(k));
    for (int k = 0; k < 3; ++k) put(s.body_rate(k));
    for (int k = 0; k < 3; ++k) put(log.ref_position[i](k));
    for (int k = 0; k < 3; ++k) put(log.ref_velocity[i](k));
    for (int k = 0; k < 4; ++k) put(log.command[i](k));
    put(log.position_error[i]);
    put(log.velocity_error[i]);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + file);
}

void ExportRolloutSummary(const RolloutMetrics& m, const std::string& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot open " + file + " for writing");
  const nlohmann::json j = {{"max_position_error", m.max_position_error},
                            {"mean_position_error", m.mean_position_error},
                            {"final_position_error", m.final_position_error},
                            {"duration", m.duration},
                            {"clamp_fraction", m.clamp_fraction},
                            {"diverged", m.diverged},
                            {"settled", m.settled},
                            {"settle_time", m.settle_time}};
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + file);
}

}  // namespace toppquad
