#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace toppquad::nlp {

using Vector = Eigen::VectorXd;

// Declared nonzeros of a sparse Jacobian, as parallel (row, col) arrays.
// Jacobian evaluators write values in exactly this order. Duplicate
// positions are allowed and summed.
struct SparsityPattern {
  std::vector<int> rows;
  std::vector<int> cols;

  int nnz() const { return static_cast<int>(rows.size()); }
  void Add(int row, int col) {
    rows.push_back(row);
    cols.push_back(col);
  }
};

// A block of smooth constraints with analytic first derivatives.
struct ConstraintSet {
  int count = 0;
  SparsityPattern jacobian;
  std::function<void(const Vector& z, Vector& values)> evaluate;
  std::function<void(const Vector& z, std::span<double> values)> jacobian_values;
  // Characteristic magnitude of each row; the solver works with value/scale.
  // Empty means all ones.
  Vector scale;
};

// minimize f(z)  subject to  c_eq(z) = 0,  c_in(z) <= 0,  lower <= z <= upper.
// Use +-infinity for absent bounds; lower == upper fixes a variable.
struct NlpProblem {
  int num_variables = 0;
  Vector lower;
  Vector upper;

  std::function<double(const Vector& z)> objective;
  std::function<void(const Vector& z, Vector& gradient)> gradient;
  // Index pairs that may be nonzero in the objective Hessian (either
  // triangle). std::nullopt means dense, only sensible for small problems.
  std::optional<std::vector<std::pair<int, int>>> objective_hessian;

  ConstraintSet equalities;
  ConstraintSet inequalities;

  // Characteristic magnitude of each variable; empty means all ones.
  Vector variable_scale;
};

// Throws std::invalid_argument describing the first inconsistency found.
void ValidateProblem(const NlpProblem& problem);

// Rows of `set` evaluated at z, divided by the declared row scales.
Vector ScaledConstraintValues(const ConstraintSet& set, const Vector& z);

// Max over scaled equality residuals, positive parts of scaled inequality
// values and bound violations at z.
double MaxViolation(const NlpProblem& problem, const Vector& z);

}  // namespace toppquad::nlp
