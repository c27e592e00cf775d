#pragma once

#include <memory>
#include <vector>

#include "toppquad/geometric_path.hpp"
#include "toppquad/quad_model.hpp"

namespace toppquad {

// A time-parameterized trajectory of the flat outputs on [0, duration()].
class FlatTrajectory {
 public:
  virtual ~FlatTrajectory() = default;
  virtual double duration() const = 0;
  virtual FlatOutput Evaluate(double t) const = 0;
};

class PolynomialTrajectory : public FlatTrajectory {
 public:
  explicit PolynomialTrajectory(PiecewisePolynomialPath path) : path_(std::move(path)) {}
  double duration() const override { return path_.duration(); }
  FlatOutput Evaluate(double t) const override;
  const PiecewisePolynomialPath& path() const { return path_; }

 private:
  PiecewisePolynomialPath path_;
};

// Uniform time dilation: evaluates base(alpha * t), so the duration becomes
// base.duration() / alpha and the k-th derivative scales by alpha^k.
class TimeScaledTrajectory : public FlatTrajectory {
 public:
  TimeScaledTrajectory(std::shared_ptr<const FlatTrajectory> base, double alpha);
  double duration() const override { return base_->duration() / alpha_; }
  FlatOutput Evaluate(double t) const override;
  double alpha() const { return alpha_; }

 private:
  std::shared_ptr<const FlatTrajectory> base_;
  double alpha_;
};

// Speed profile of a third-order integrator on a uniform grid: node values
// h, h', h'' and one h''' per interval. Within an interval h is the cubic
// generated by the integrator.
struct CubicSpeedProfile {
  double ds = 0.0;
  std::vector<double> h, hp, hpp;  // per node
  std::vector<double> hppp;        // per interval

  int intervals() const { return static_cast<int>(hppp.size()); }
};

// A geometric path traversed with a cubic speed profile. Time within an
// interval follows the profile linearized between its nodes, which is the
// map whose total matches the node-based traversal time.
class ReparameterizedTrajectory : public FlatTrajectory {
 public:
  ReparameterizedTrajectory(GeometricPath path, CubicSpeedProfile profile);
  double duration() const override { return node_times_.back(); }
  FlatOutput Evaluate(double t) const override;
  double PathParameter(double t) const;
  const std::vector<double>& node_times() const { return node_times_; }

 private:
  GeometricPath path_;
  CubicSpeedProfile profile_;
  std::vector<double> node_times_;
};

struct ThrustExtremes {
  Vec4 motor_min = Vec4::Zero();  // per-motor extremes, N
  Vec4 motor_max = Vec4::Zero();
  double min_thrust = 0.0;  // smallest single-motor thrust, N
  double max_thrust = 0.0;  // largest single-motor thrust, N
  double time_of_min = 0.0;
  double time_of_max = 0.0;
  int samples = 0;
  // The flat map was singular somewhere; extremes then cover the regular
  // samples only and the trajectory must be treated as infeasible.
  bool singular = false;

  bool Within(const Vec4& u_min, const Vec4& u_max, double margin = 0.0) const;
};

// Samples the trajectory every dt (plus the end point) and evaluates
// per-motor thrusts through the flatness map.
ThrustExtremes ScanThrusts(const FlatTrajectory& traj, const QuadParams& params, double dt);

}  // namespace toppquad
