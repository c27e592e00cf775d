#pragma once

#include <optional>
#include <string>
#include <vector>

#include "toppquad/geometric_path.hpp"
#include "toppquad/nlp/solver.hpp"
#include "toppquad/quad_model.hpp"
#include "toppquad/reparam.hpp"

namespace toppquad {

enum class BoundaryMode {
  // h = 0 at both ends, initial attitude fixed to the guess.
  kRestToRest,
  // h free at both ends, unit initial quaternion.
  kFreeEnd,
};

const char* ToString(BoundaryMode mode);
BoundaryMode ParseBoundaryMode(const std::string& name);

struct ToppOptions {
  std::optional<double> v_max;
  bool bidirectional = false;
  BoundaryMode boundary = BoundaryMode::kRestToRest;
  int n = 300;
  // Lower bound on interior square speeds.
  double h_floor = 1e-6;
  // A solution slower than failure_ratio * guess time counts as a failure.
  double failure_ratio = 1.01;
  // Start the solver close to the guess (small barrier parameter); use when
  // the guess is already a solution of a neighbouring problem.
  bool warm_start = false;
  // Weight of sum_i ds |w_i|^2 added to the traversal time. Yaw about the
  // thrust axis is otherwise nearly free, which leaves the problem with flat
  // directions; a tiny weight removes them without moving the optimum
  // noticeably.
  double rate_weight = 1e-4;
  nlp::SolverOptions solver;

  // Throws ConfigError on invalid combinations.
  void Validate() const;
};

// Node-major variable layout, 16 variables per node.
struct ToppLayout {
  static constexpr int kPerNode = 16;
  static constexpr int kH = 0, kHp = 1, kQ = 2, kW = 6, kAlpha = 9, kU = 12;
  int nodes = 0;

  int size() const { return kPerNode * nodes; }
  int Index(int node, int field) const { return kPerNode * node + field; }
};

nlp::Vector Pack(const ToppDecisionState& state);
ToppDecisionState Unpack(const nlp::Vector& z, int nodes);

// Row ranges of the equality families in the assembled problem.
struct ToppRowLayout {
  int euler_h = 0, euler_w = 0, quaternion = 0, translational = 0, rotational = 0, unit_norm = 0;
  int count = 0;
};

struct ToppProblem {
  nlp::NlpProblem problem;
  nlp::Vector z0;
  ToppLayout layout;
  ToppRowLayout rows;
  // Motor bounds in effect (sign-extended when bidirectional).
  QuadParams params;
};

// Builds the discretized minimum-time program. Throws AssemblyError when the
// guess does not match the grid.
ToppProblem Assemble(const PathGrid& grid, const QuadParams& params,
                     const ToppDecisionState& guess, const ToppOptions& opts);

struct ToppSolution {
  PathGrid grid;
  ToppDecisionState state;
  double total_time = 0.0;
  double guess_time = 0.0;
  nlp::SolveReport report;
  bool success = false;
  std::string failure_reason;
  bool bidirectional = false;
  Vec4 u_min = Vec4::Zero();
  Vec4 u_max = Vec4::Zero();
};

// Solves from `guess`. Success requires solver convergence and a total time
// no worse than failure_ratio times the guess time.
ToppSolution SolveToppQuad(const GeometricPath& path, const QuadParams& params,
                           const ToppOptions& opts, const ToppDecisionState& guess);
ToppSolution SolveToppQuad(const PathGrid& grid, const QuadParams& params,
                           const ToppOptions& opts, const ToppDecisionState& guess);

struct ValidationReport {
  // Max residual per family, each normalized by its characteristic scale.
  double euler_h = 0.0;
  double euler_w = 0.0;
  double quaternion_update = 0.0;
  double translational = 0.0;
  double rotational = 0.0;
  double boundary = 0.0;
  double quaternion_norm = 0.0;    // max | |q_i| - 1 |
  double thrust_violation = 0.0;   // N
  bool pass = false;
  std::vector<std::string> failed;

  static constexpr double kResidualTol = 1e-5;
  static constexpr double kNormTol = 1e-7;
  static constexpr double kThrustTol = 1e-6;
};

ValidationReport ValidateSolution(const ToppSolution& sol, const QuadParams& params,
                                  const ToppOptions& opts);

// Max residual of each dynamics family for an arbitrary state (no bound or
// norm checks); used for guesses.
ValidationReport EvaluateResiduals(const PathGrid& grid, const QuadParams& params,
                                   const ToppDecisionState& state);

}  // namespace toppquad
