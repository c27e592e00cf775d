#include "toppquad/flat_trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "toppquad/errors.hpp"

namespace toppquad {

FlatOutput PolynomialTrajectory::Evaluate(double t) const {
  FlatOutput f;
  const Vec4 p0 = path_.Evaluate(t, 0), p1 = path_.Evaluate(t, 1), p2 = path_.Evaluate(t, 2);
  f.position = p0.head<3>();
  f.velocity = p1.head<3>();
  f.acceleration = p2.head<3>();
  f.jerk = path_.Evaluate(t, 3).head<3>();
  f.snap = path_.Evaluate(t, 4).head<3>();
  f.yaw = p0(3);
  f.yaw_rate = p1(3);
  f.yaw_acceleration = p2(3);
  return f;
}

TimeScaledTrajectory::TimeScaledTrajectory(std::shared_ptr<const FlatTrajectory> base,
                                           double alpha)
    : base_(std::move(base)), alpha_(alpha) {
  if (!(alpha_ > 0.0)) throw ConfigError("time scale must be positive");
}

FlatOutput TimeScaledTrajectory::Evaluate(double t) const {
  FlatOutput f = base_->Evaluate(std::min(alpha_ * t, base_->duration()));
  const double a2 = alpha_ * alpha_;
  f.velocity *= alpha_;
  f.acceleration *= a2;
  f.jerk *= a2 * alpha_;
  f.snap *= a2 * a2;
  f.yaw_rate *= alpha_;
  f.yaw_acceleration *= a2;
  return f;
}

ReparameterizedTrajectory::ReparameterizedTrajectory(GeometricPath path,
                                                     CubicSpeedProfile profile)
    : path_(std::move(path)), profile_(std::move(profile)) {
  const int n = profile_.intervals();
  if (n < 1 || static_cast<int>(profile_.h.size()) != n + 1 ||
      static_cast<int>(profile_.hp.size()) != n + 1 ||
      static_cast<int>(profile_.hpp.size()) != n + 1) {
    throw AssemblyError("speed profile arrays do not match the interval count");
  }
  node_times_.assign(1, 0.0);
  for (int i = 0; i < n; ++i) {
    const double a = std::sqrt(std::max(0.0, profile_.h[i]));
    const double b = std::sqrt(std::max(0.0, profile_.h[i + 1]));
    if (a + b <= 0.0) throw DegenerateIntervalError("interval with zero speed at both ends", i);
    node_times_.push_back(node_times_.back() + 2.0 * profile_.ds / (a + b));
  }
}

double ReparameterizedTrajectory::PathParameter(double t) const {
  t = std::clamp(t, 0.0, duration());
  const int i = static_cast<int>(std::upper_bound(node_times_.begin() + 1, node_times_.end() - 1, t) -
                           node_times_.begin()) - 1;
  const double tau = t - node_times_[i];
  const double h0 = std::max(0.0, profile_.h[i]);
  const double h1 = std::max(0.0, profile_.h[i + 1]);
  const double slope = (h1 - h0) / profile_.ds;
  const double sigma = std::sqrt(h0) * tau + 0.25 * slope * tau * tau;
  return std::clamp(i * profile_.ds + sigma, i * profile_.ds, (i + 1) * profile_.ds);
}

FlatOutput ReparameterizedTrajectory::Evaluate(double t) const {
  const double s = PathParameter(t);
  const int n = profile_.intervals();
  const int i = std::min(n - 1, static_cast<int>(s / profile_.ds));
  const double x = s - i * profile_.ds;
  const double d3 = profile_.hppp[i];
  const double h = std::max(0.0, profile_.h[i] + profile_.hp[i] * x + 0.5 * profile_.hpp[i] * x * x +
                                     d3 * x * x * x / 6.0);
  const double hp = profile_.hp[i] + profile_.hpp[i] * x + 0.5 * d3 * x * x;
  const double hpp = profile_.hpp[i] + d3 * x;
  const double hppp = d3;

  const Vec3 g1 = path_.Derivative(s, 1), g2 = path_.Derivative(s, 2);
  const Vec3 g3 = path_.Derivative(s, 3), g4 = path_.Derivative(s, 4);
  const double rh = std::sqrt(h);
  FlatOutput f;
  f.position = path_.Position(s);
  f.velocity = rh * g1;
  f.acceleration = 0.5 * hp * g1 + h * g2;
  const Vec3 b = 0.5 * hpp * g1 + 1.5 * hp * g2 + h * g3;
  f.jerk = rh * b;
  f.snap = 0.5 * hp * b + h * (0.5 * hppp * g1 + 2.0 * hpp * g2 + 2.5 * hp * g3 + h * g4);
  f.yaw = path_.Yaw(s, 0);
  f.yaw_rate = rh * path_.Yaw(s, 1);
  f.yaw_acceleration = 0.5 * hp * path_.Yaw(s, 1) + h * path_.Yaw(s, 2);
  return f;
}

bool ThrustExtremes::Within(const Vec4& u_min, const Vec4& u_max, double margin) const {
  if (singular || samples == 0) return false;
  return ((motor_min - u_min).array() >= margin).all() &&
         ((u_max - motor_max).array() >= margin).all();
}

ThrustExtremes ScanThrusts(const FlatTrajectory& traj, const QuadParams& params, double dt) {
  ThrustExtremes ex;
  ex.motor_min = Vec4::Constant(std::numeric_limits<double>::infinity());
  ex.motor_max = Vec4::Constant(-std::numeric_limits<double>::infinity());
  const double total = traj.duration();
  const int steps = std::max(1, static_cast<int>(std::ceil(total / dt - 1e-9)));
  for (int k = 0; k <= steps; ++k) {
    const double t = std::min(total, k * dt);
    MotorThrusts u;
    try {
      u = FlatToState(traj.Evaluate(t), params).thrusts;
    } catch (const SingularityError&) {
      ex.singular = true;
      continue;
    }
    ++ex.samples;
    ex.motor_min = ex.motor_min.cwiseMin(u);
    ex.motor_max = ex.motor_max.cwiseMax(u);
    if (ex.samples == 1 || u.minCoeff() < ex.min_thrust) {
      ex.min_thrust = u.minCoeff();
      ex.time_of_min = t;
    }
    if (ex.samples == 1 || u.maxCoeff() > ex.max_thrust) {
      ex.max_thrust = u.maxCoeff();
      ex.time_of_max = t;
    }
  }
  return ex;
}

}  // namespace toppquad
