#pragma once

#include <iosfwd>
#include <string>

#include "toppquad/nlp/problem.hpp"

namespace toppquad::nlp {

enum class SolveStatus {
  kConverged,
  kMaxIterations,
  kInfeasibleStationary,
  kNumericalFailure,
};

const char* ToString(SolveStatus status);

struct SolverOptions {
  double feas_tol = 1e-6;  // on scaled constraint rows
  double opt_tol = 1e-4;   // scaled dual infeasibility and complementarity
  int max_iterations = 3000;
  double mu_init = 0.1;
  // Relative push of the initial point into the interior of its bounds.
  double bound_push = 1e-2;
  // Iteration log, one line per iteration, written to `log` when set.
  bool verbose = false;
  std::ostream* log = nullptr;
};

struct SolveReport {
  SolveStatus status = SolveStatus::kNumericalFailure;
  int iterations = 0;
  double objective = 0.0;
  // Max scaled constraint/bound violation, re-evaluated on the caller's
  // problem at the returned point (see MaxViolation).
  double max_violation = 0.0;
  // Scaled first-order stationarity (dual infeasibility) at exit.
  double stationarity = 0.0;
  double complementarity = 0.0;
  double wall_time_seconds = 0.0;
  // Set on kNumericalFailure when a specific constraint row was non-finite.
  // Equality rows first, then inequality rows offset by the equality count.
  int offending_constraint = -1;
  std::string message;

  bool converged() const { return status == SolveStatus::kConverged; }
};

struct SolveResult {
  Vector z;
  Vector equality_multipliers;
  Vector inequality_multipliers;
  SolveReport report;
};

// Primal-dual interior-point method with a filter line search. Second
// derivatives of the Lagrangian are approximated by finite differences of
// its gradient, grouped by a distance-2 coloring of the Hessian pattern
// implied by the Jacobian sparsity, so no user Hessian is needed.
// Deterministic for identical inputs.
SolveResult Solve(const NlpProblem& problem, const Vector& z0,
                  const SolverOptions& options = {});

}  // namespace toppquad::nlp
