#include "toppquad/nlp/derivative_check.hpp"

#include <algorithm>
#include <cmath>

namespace toppquad::nlp {

double DerivativeReport::max_relative_error() const {
  double e = 0.0;
  for (const auto& b : blocks) e = std::max(e, b.max_relative_error);
  return e;
}

const BlockError& DerivativeReport::worst() const {
  static const BlockError kEmpty{};
  if (blocks.empty()) return kEmpty;
  return *std::max_element(blocks.begin(), blocks.end(), [](const auto& a, const auto& b) {
    return a.max_relative_error < b.max_relative_error;
  });
}

namespace {

bool IsFixed(const NlpProblem& p, int j) { return p.lower(j) == p.upper(j); }

double Step(const NlpProblem& p, const Vector& z, int j, double rel) {
  double h = rel * std::max(1.0, std::abs(z(j)));
  // Stay inside the box when it is tight.
  const double room = std::min(z(j) - p.lower(j), p.upper(j) - z(j));
  if (room > 0.0) h = std::min(h, 0.5 * room);
  return h;
}

double RelError(double a, double n) { return std::abs(a - n) / std::max(1.0, std::abs(n)); }

void CheckSet(const NlpProblem& p, const ConstraintSet& set, const Vector& z,
              const DerivativeCheckOptions& opt, const char* name, BlockError& out,
              std::vector<std::pair<int, int>>& undeclared) {
  out.block = name;
  if (set.count == 0) return;
  const int n = p.num_variables;
  std::vector<double> vals(set.jacobian.nnz());
  set.jacobian_values(z, std::span<double>(vals.data(), vals.size()));

  // Column-wise analytic Jacobian, summing duplicates.
  std::vector<std::vector<std::pair<int, double>>> cols(n);
  for (int t = 0; t < set.jacobian.nnz(); ++t) {
    auto& col = cols[set.jacobian.cols[t]];
    const int r = set.jacobian.rows[t];
    auto it = std::find_if(col.begin(), col.end(), [r](const auto& e) { return e.first == r; });
    if (it == col.end()) {
      col.emplace_back(r, vals[t]);
    } else {
      it->second += vals[t];
    }
  }

  Vector cp(set.count), cm(set.count);
  for (int j = 0; j < n; ++j) {
    if (IsFixed(p, j)) continue;
    const double h = Step(p, z, j, opt.step);
    Vector zp = z, zm = z;
    zp(j) += h;
    zm(j) -= h;
    set.evaluate(zp, cp);
    set.evaluate(zm, cm);
    Vector numeric = (cp - cm) / (2.0 * h);
    for (const auto& [r, a] : cols[j]) {
      const double e = RelError(a, numeric(r));
      if (e > out.max_relative_error || out.col < 0) {
        out.max_relative_error = e;
        out.row = r;
        out.col = j;
        out.analytic = a;
        out.numeric = numeric(r);
      }
      numeric(r) = 0.0;
    }
    for (int r = 0; r < set.count; ++r) {
      if (std::abs(numeric(r)) > opt.undeclared_threshold) {
        undeclared.emplace_back(r, j);
        const double e = RelError(0.0, numeric(r));
        if (e > out.max_relative_error) {
          out.max_relative_error = e;
          out.row = r;
          out.col = j;
          out.analytic = 0.0;
          out.numeric = numeric(r);
        }
      }
    }
  }
}

}  // namespace

DerivativeReport CheckDerivatives(const NlpProblem& p, const Vector& z,
                                  const DerivativeCheckOptions& opt) {
  ValidateProblem(p);
  DerivativeReport report;
  const int n = p.num_variables;

  BlockError grad_err;
  grad_err.block = "gradient";
  Vector g = Vector::Zero(n);
  p.gradient(z, g);
  for (int j = 0; j < n; ++j) {
    if (IsFixed(p, j)) continue;
    const double h = Step(p, z, j, opt.step);
    Vector zp = z, zm = z;
    zp(j) += h;
    zm(j) -= h;
    const double numeric = (p.objective(zp) - p.objective(zm)) / (2.0 * h);
    const double e = RelError(g(j), numeric);
    if (e > grad_err.max_relative_error || grad_err.col < 0) {
      grad_err.max_relative_error = e;
      grad_err.col = j;
      grad_err.analytic = g(j);
      grad_err.numeric = numeric;
    }
  }
  report.blocks.push_back(grad_err);

  BlockError eq_err, in_err;
  CheckSet(p, p.equalities, z, opt, "equalities", eq_err, report.undeclared_equality_entries);
  CheckSet(p, p.inequalities, z, opt, "inequalities", in_err,
           report.undeclared_inequality_entries);
  report.blocks.push_back(eq_err);
  report.blocks.push_back(in_err);
  return report;
}

}  // namespace toppquad::nlp
