#pragma once

#include <string>
#include <vector>

#include "toppquad/nlp/problem.hpp"

namespace toppquad::nlp {

struct BlockError {
  std::string block;  // "gradient", "equalities" or "inequalities"
  double max_relative_error = 0.0;
  // Location of the worst entry; row is -1 for the gradient.
  int row = -1;
  int col = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct DerivativeReport {
  std::vector<BlockError> blocks;
  // Numerically nonzero entries that are missing from the declared pattern.
  std::vector<std::pair<int, int>> undeclared_equality_entries;
  std::vector<std::pair<int, int>> undeclared_inequality_entries;

  double max_relative_error() const;
  const BlockError& worst() const;
};

struct DerivativeCheckOptions {
  double step = 1e-6;  // relative central-difference step
  // Numeric magnitude above which an undeclared entry is reported.
  double undeclared_threshold = 1e-6;
};

// Compares the analytic gradient and Jacobians against central finite
// differences at z. Relative error is |a - n| / max(1, |n|). Variables fixed
// by equal bounds are skipped.
DerivativeReport CheckDerivatives(const NlpProblem& problem, const Vector& z,
                                  const DerivativeCheckOptions& options = {});

}  // namespace toppquad::nlp
