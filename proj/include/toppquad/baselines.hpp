#pragma once

#include <memory>
#include <optional>

#include "toppquad/flat_trajectory.hpp"
#include "toppquad/geometric_path.hpp"
#include "toppquad/nlp/solver.hpp"
#include "toppquad/quad_model.hpp"

namespace toppquad {

// Convex speed-profile relaxation over a third-order integrator in s:
// node states (h, h', h'') driven by one h''' per interval, h = 0 at both
// ends, objective sum 2 ds / (sqrt(h_i) + sqrt(h_{i+1})) + lambda sum h'''^2.
struct ConvexToppSpec {
  std::optional<double> v_max;  // m/s
  // Adds |1/2 gamma' h' + gamma'' h - g| <= sum(u_max) / m at every node.
  bool include_thrust_bound = false;
  // Weight on h''' with s in seed seconds; larger values make the h''' term
  // dominate the traversal time.
  double lambda = 1e-6;
  nlp::SolverOptions solver;

  // Throws ConfigError on v_max <= 0 or lambda <= 0.
  void Validate() const;
};

struct ConvexToppResult {
  CubicSpeedProfile profile;
  double total_time = 0.0;      // quadrature of the node profile
  double regularization = 0.0;  // lambda sum h'''^2
  nlp::SolveReport report;
  bool success = false;
};

// Speed bound only.
ConvexToppResult ToppVel(const PathGrid& grid, const ConvexToppSpec& spec);
// Speed bound (when set) plus the mass-normalized total thrust bound.
ConvexToppResult ToppAcc(const PathGrid& grid, const QuadParams& params,
                         const ConvexToppSpec& spec);
// Dispatches on spec.include_thrust_bound.
ConvexToppResult SolveConvexTopp(const PathGrid& grid, const QuadParams& params,
                                 const ConvexToppSpec& spec);

struct AlphaScaleOptions {
  double alpha_min = 1e-3;
  double tolerance = 1e-4;  // relative width of the final bracket
  double margin = 1e-6;     // N, kept from both thrust bounds
  int samples = 2000;       // base-time samples checked per trial
};

struct AlphaScaleResult {
  std::shared_ptr<const TimeScaledTrajectory> trajectory;
  double alpha = 1.0;
  ThrustExtremes extremes;
};

// True when every sampled motor thrust of base(alpha t) lies within the
// bounds shrunk by the margin.
bool ThrustFeasibleAt(const FlatTrajectory& base, const QuadParams& params, double alpha,
                      const AlphaScaleOptions& opts = {});

// Largest alpha in [alpha_min, 1] (to tolerance) for which the uniformly
// slowed trajectory base(alpha t) is thrust-feasible. Throws InfeasibleError
// when even alpha_min is not.
AlphaScaleResult AlphaScale(std::shared_ptr<const FlatTrajectory> base, const QuadParams& params,
                            const AlphaScaleOptions& opts = {});

}  // namespace toppquad
