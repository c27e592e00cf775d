#pragma once

#include <string>
#include <vector>

#include "toppquad/flat_trajectory.hpp"
#include "toppquad/geometric_path.hpp"
#include "toppquad/quad_model.hpp"
#include "toppquad/topp_nlp.hpp"

namespace toppquad {

struct TrajectoryMetadata {
  std::string source;
  std::string params_hash;
};

// Uniformly time-sampled reference. `s` and `jerk` may be empty (CSV files
// carry neither).
struct TimedTrajectory {
  std::vector<double> t;
  std::vector<double> s;
  std::vector<Vec3> position, velocity, acceleration, jerk;
  std::vector<Quat> attitude;
  std::vector<Vec3> body_rate;
  std::vector<MotorThrusts> thrust;
  TrajectoryMetadata metadata;

  int size() const { return static_cast<int>(t.size()); }
  double duration() const { return t.empty() ? 0.0 : t.back() - t.front(); }
  // Throws ConfigError on mismatched array lengths, non-increasing times or
  // attitudes that are not unit to 1e-9.
  void Validate() const;
};

// Hex digest of every field of the parameter set.
std::string ParamsHash(const QuadParams& params);

// Continuous-time view of a solution: per-interval quintic position matching
// position, velocity and acceleration at both nodes (acceleration from a
// central estimate of dh/ds); cumulative cubic
// quaternion spline matching attitude and body rate at both nodes; linear
// thrusts. Yaw comes from `path` when given, from the attitude heading
// otherwise (with zero yaw rate and acceleration).
class SolutionInterpolant : public FlatTrajectory {
 public:
  explicit SolutionInterpolant(const ToppSolution& sol, const GeometricPath* path = nullptr);

  double duration() const override { return node_times_.back(); }
  FlatOutput Evaluate(double t) const override;
  void Attitude(double t, Quat& q, Vec3& body_rate) const;
  MotorThrusts Thrust(double t) const;
  double PathParameter(double t) const;
  const std::vector<double>& node_times() const { return node_times_; }

 private:
  int Interval(double t) const;

  std::vector<double> node_times_, s_, h_;
  std::vector<Vec3> p_, v_, a_;
  std::vector<Quat> q_;
  std::vector<Vec3> w_;  // time-domain body rates
  std::vector<MotorThrusts> u_;
  double ds_ = 0.0;
  const GeometricPath* path_ = nullptr;
};

// Samples at k dt for k = 0, 1, ... plus a final sample at the total time
// when it is not a multiple of dt. A dt larger than the shortest node
// interval appends a message to `warnings` when given.
TimedTrajectory SampleSolution(const ToppSolution& sol, const QuadParams& params, double dt,
                               const GeometricPath* path = nullptr,
                               std::vector<std::string>* warnings = nullptr);

// Same sampling for any flat trajectory; attitude, rates and thrusts come
// from the flatness map. Throws SingularityError naming the sample time.
TimedTrajectory SampleFlat(const FlatTrajectory& traj, const QuadParams& params, double dt,
                           const std::string& source);

enum class TrajectoryFormat { kCsv, kJson };
TrajectoryFormat ParseTrajectoryFormat(const std::string& name);

// CSV columns t,x,y,z,vx,vy,vz,ax,ay,az,qw,qx,qy,qz,wx,wy,wz,u1,u2,u3,u4 with
// round-trip precision. JSON adds s, jerk and the metadata. Throw IoError
// naming the file.
void ExportTrajectory(const TimedTrajectory& traj, const std::string& file,
                      TrajectoryFormat format);
TimedTrajectory ImportTrajectory(const std::string& file, TrajectoryFormat format);

}  // namespace toppquad
