#include "toppquad/nlp/problem.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace toppquad::nlp {

namespace {

void ValidateSet(const ConstraintSet& set, int n, const char* name) {
  const std::string tag(name);
  if (set.count < 0) throw std::invalid_argument(tag + ": negative count");
  if (set.count == 0) return;
  if (!set.evaluate || !set.jacobian_values) {
    throw std::invalid_argument(tag + ": missing evaluator");
  }
  if (set.jacobian.rows.size() != set.jacobian.cols.size()) {
    throw std::invalid_argument(tag + ": ragged sparsity pattern");
  }
  for (int k = 0; k < set.jacobian.nnz(); ++k) {
    const int r = set.jacobian.rows[k];
    const int c = set.jacobian.cols[k];
    if (r < 0 || r >= set.count || c < 0 || c >= n) {
      throw std::invalid_argument(tag + ": sparsity entry out of range");
    }
  }
  if (set.scale.size() != 0) {
    if (set.scale.size() != set.count) throw std::invalid_argument(tag + ": scale size");
    if ((set.scale.array() <= 0.0).any()) {
      throw std::invalid_argument(tag + ": scales must be positive");
    }
  }
}

}  // namespace

void ValidateProblem(const NlpProblem& p) {
  const int n = p.num_variables;
  if (n <= 0) throw std::invalid_argument("problem has no variables");
  if (p.lower.size() != n || p.upper.size() != n) {
    throw std::invalid_argument("bound vectors do not match variable count");
  }
  for (int i = 0; i < n; ++i) {
    if (p.lower(i) > p.upper(i)) {
      throw std::invalid_argument("lower bound exceeds upper bound at variable " +
                                  std::to_string(i));
    }
  }
  if (!p.objective || !p.gradient) throw std::invalid_argument("missing objective");
  if (p.variable_scale.size() != 0) {
    if (p.variable_scale.size() != n) throw std::invalid_argument("variable scale size");
    if ((p.variable_scale.array() <= 0.0).any()) {
      throw std::invalid_argument("variable scales must be positive");
    }
  }
  if (p.objective_hessian) {
    for (const auto& [i, j] : *p.objective_hessian) {
      if (i < 0 || j < 0 || i >= n || j >= n) {
        throw std::invalid_argument("objective Hessian entry out of range");
      }
    }
  }
  ValidateSet(p.equalities, n, "equalities");
  ValidateSet(p.inequalities, n, "inequalities");
}

Vector ScaledConstraintValues(const ConstraintSet& set, const Vector& z) {
  Vector values(set.count);
  if (set.count == 0) return values;
  set.evaluate(z, values);
  if (set.scale.size() == set.count) values.array() /= set.scale.array();
  return values;
}

double MaxViolation(const NlpProblem& p, const Vector& z) {
  double v = 0.0;
  if (p.equalities.count > 0) {
    v = std::max(v, ScaledConstraintValues(p.equalities, z).cwiseAbs().maxCoeff());
  }
  if (p.inequalities.count > 0) {
    v = std::max(v, ScaledConstraintValues(p.inequalities, z).maxCoeff());
  }
  for (int i = 0; i < p.num_variables; ++i) {
    v = std::max(v, p.lower(i) - z(i));
    v = std::max(v, z(i) - p.upper(i));
  }
  return v;
}

}  // namespace toppquad::nlp
