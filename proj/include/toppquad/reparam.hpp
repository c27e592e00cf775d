#pragma once

#include <optional>
#include <vector>

#include "toppquad/flat_trajectory.hpp"
#include "toppquad/geometric_path.hpp"
#include "toppquad/quad_model.hpp"

namespace toppquad {

// Square-speed profile h(s) = (ds/dt)^2 and its s-derivative at the nodes.
struct SpeedProfile {
  std::vector<double> h;
  std::vector<double> hp;
};

// Attitude, body rate and angular acceleration with respect to s.
struct RotationProfile {
  std::vector<Quat> q;
  std::vector<Vec3> w;
  std::vector<Vec3> alpha;
};

// Every per-node decision variable of the time-optimal program.
struct ToppDecisionState {
  SpeedProfile speed;
  RotationProfile rotation;
  std::vector<MotorThrusts> u;

  int nodes() const { return static_cast<int>(speed.h.size()); }
  // Throws AssemblyError unless every array has `nodes` entries.
  void CheckSize(int nodes) const;
};

// T = sum 2 ds / (sqrt(h_i) + sqrt(h_{i+1})). Throws DegenerateIntervalError
// for an interval with zero speed at both ends and ConfigError on negative h.
double TraversalTime(const std::vector<double>& h, double ds);

// Cumulative time at each node under the same quadrature.
std::vector<double> TimeMap(const std::vector<double>& h, double ds);

// Initial guess with s identified with the seed time: h = 1, h' = 0, and the
// rotational variables and thrusts from the flatness map at t = s_i. alpha
// uses central differences of w (one-sided at the ends). Quaternion signs are
// made continuous. A singular node rethrows SingularityError naming the node.
ToppDecisionState InitialGuessFromSeed(const FlatTrajectory& seed, const PathGrid& grid,
                                       const QuadParams& params);

// Partially observed trajectory samples, with times on the same axis as s.
struct StateSamples {
  std::vector<double> times;
  std::vector<Vec3> positions;
  std::vector<Vec3> accelerations;  // optional
  std::vector<Quat> attitudes;      // optional
  std::vector<Vec3> body_rates;     // optional
  std::vector<MotorThrusts> thrusts;  // optional
};

// Initial guess from samples, linearly interpolated at the grid nodes.
// Unknown quantities fall back to hover values: attitude from the flatness
// map of the accelerations when present (identity otherwise), zero rates and
// angular accelerations, hover thrusts.
ToppDecisionState InitialGuessFromStates(const StateSamples& samples, const PathGrid& grid,
                                         const QuadParams& params);

// Flips quaternion signs so that consecutive dot products are non-negative.
void MakeSignContinuous(std::vector<Quat>& q);

}  // namespace toppquad
