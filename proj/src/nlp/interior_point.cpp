#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <vector>

#include "toppquad/nlp/solver.hpp"

namespace toppquad::nlp {

const char* ToString(SolveStatus status) {
  switch (status) {
    case SolveStatus::kConverged:
      return "converged";
    case SolveStatus::kMaxIterations:
      return "max_iterations";
    case SolveStatus::kInfeasibleStationary:
      return "infeasible_stationary";
    case SolveStatus::kNumericalFailure:
      return "numerical_failure";
  }
  return "unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Algorithm constants (names follow the usual filter line-search literature).
constexpr double kKappaEps = 10.0;
constexpr double kKappaMu = 0.2;
constexpr double kThetaMu = 1.5;
constexpr double kTauMin = 0.99;
constexpr double kKappaSigma = 1e10;
constexpr double kGammaTheta = 1e-5;
constexpr double kGammaPhi = 1e-8;
constexpr double kDelta = 1.0;
constexpr double kSTheta = 1.1;
constexpr double kSPhi = 2.3;
constexpr double kEta = 1e-8;
constexpr double kGammaAlpha = 0.05;
constexpr double kKappaSoc = 0.99;
constexpr int kMaxSoc = 4;
constexpr double kKappaD = 1e-5;
constexpr double kDeltaC = 1e-8;
constexpr double kScaleMax = 100.0;
constexpr int kMaxSoftSteps = 10;

using SpMat = Eigen::SparseMatrix<double>;
using Clock = std::chrono::steady_clock;

struct FilterEntry {
  double theta;
  double phi;
};

class InteriorPoint {
 public:
  InteriorPoint(const NlpProblem& p, const SolverOptions& o) : prob_(p), opt_(o) {
    Setup();
  }

  SolveResult Run(const Vector& z0);

 private:
  // ---- problem mapping -------------------------------------------------
  void Setup();
  Vector Unpack(const Vector& x) const;
  bool EvalObjective(const Vector& x, double& f) const;
  bool EvalGradient(const Vector& x, Vector& g) const;
  // Returns the index of a non-finite row (or -2 for other failures), -1 ok.
  int EvalConstraints(const Vector& x, Vector& c) const;
  int EvalJacobian(const Vector& x, Vector& jv) const;
  void JacTransposeTimes(const Vector& jv, const Vector& y, Vector& out) const;

  // ---- linear algebra --------------------------------------------------
  void BuildHessianStructure();
  bool ComputeHessian(const Vector& x, const Vector& lambda, const Vector& grad_lag);
  bool Factorize(const Vector& sigma, double delta_w, double delta_c);
  bool FactorizeWithCorrection(const Vector& sigma, bool use_hessian, double& delta_w);
  Vector SolveKkt(const Vector& rhs, const Vector& sigma, double delta_w, double delta_c);
  void InitMultipliers();

  // ---- barrier quantities ----------------------------------------------
  double BarrierPhi(const Vector& x, double f) const;
  Vector BarrierGradient(const Vector& x, const Vector& grad) const;
  double FractionToBoundary(const Vector& x, const Vector& dx, double tau) const;
  double FractionToBoundaryZ(const Vector& z, const Vector& dz, double tau) const;
  Vector Sigma() const;
  bool Restoration();
  bool IsAcceptableToFilter(double theta, double phi) const;
  Vector Project(const Vector& x) const;

  const NlpProblem& prob_;
  SolverOptions opt_;

  int n_orig_ = 0, n_free_ = 0, n_slack_ = 0, n_ = 0;
  int me_ = 0, mi_ = 0, m_ = 0;
  std::vector<int> free_to_orig_;
  std::vector<int> orig_to_free_;
  Vector z_template_;
  Vector dscale_;
  Vector eq_scale_, in_scale_;
  double obj_scale_ = 1.0;
  Vector lower_, upper_;
  std::vector<char> has_lower_, has_upper_;

  // Internal Jacobian: entries (jrow_, jcol_) with value = src * jfactor_.
  // jsrc_ >= 0 indexes the equality values, < -1 indexes inequality values as
  // -(k + 2), and == -1 marks a slack entry with value -1.
  std::vector<int> jrow_, jcol_, jsrc_;
  std::vector<double> jfactor_;
  mutable Vector eq_vals_, in_vals_;

  // Hessian pattern: per column, sorted rows.
  std::vector<std::vector<int>> adj_;
  std::vector<int> adj_offset_;
  std::vector<int> color_;
  int num_colors_ = 0;
  Vector hess_col_vals_;
  struct LowerEntry {
    int row, col, a, b;  // a: position in column col, b: mirrored position
  };
  std::vector<LowerEntry> hess_lower_;
  Vector hess_lower_vals_;

  // KKT matrix with fixed structure.
  SpMat kkt_;
  std::vector<int> kkt_hess_pos_, kkt_diag_pos_, kkt_jac_pos_, kkt_cdiag_pos_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  bool analyzed_ = false;
  double last_delta_w_ = 0.0;

  // Iterate.
  Vector x_, lambda_, zl_, zu_;
  double f_ = 0.0;
  Vector grad_, c_, jv_;
  double mu_ = 0.1;
  std::vector<FilterEntry> filter_;
  double theta_max_ = 0.0, theta_min_ = 0.0;
};

void InteriorPoint::Setup() {
  ValidateProblem(prob_);
  n_orig_ = prob_.num_variables;
  me_ = prob_.equalities.count;
  mi_ = prob_.inequalities.count;
  m_ = me_ + mi_;

  orig_to_free_.assign(n_orig_, -1);
  z_template_ = Vector::Zero(n_orig_);
  for (int j = 0; j < n_orig_; ++j) {
    const double lo = prob_.lower(j), hi = prob_.upper(j);
    const bool fixed = std::isfinite(lo) && std::isfinite(hi) &&
                       hi - lo <= 1e-14 * std::max(1.0, std::abs(lo));
    if (fixed) {
      z_template_(j) = lo;
    } else {
      orig_to_free_[j] = static_cast<int>(free_to_orig_.size());
      free_to_orig_.push_back(j);
    }
  }
  n_free_ = static_cast<int>(free_to_orig_.size());
  n_slack_ = mi_;
  n_ = n_free_ + n_slack_;

  dscale_ = Vector::Ones(n_);
  if (prob_.variable_scale.size() == n_orig_) {
    for (int k = 0; k < n_free_; ++k) dscale_(k) = prob_.variable_scale(free_to_orig_[k]);
  }
  eq_scale_ = prob_.equalities.scale.size() == me_ ? prob_.equalities.scale
                                                     : Vector(Vector::Ones(me_));
  in_scale_ = prob_.inequalities.scale.size() == mi_ ? prob_.inequalities.scale
                                                       : Vector(Vector::Ones(mi_));

  lower_.resize(n_);
  upper_.resize(n_);
  has_lower_.assign(n_, 0);
  has_upper_.assign(n_, 0);
  for (int k = 0; k < n_free_; ++k) {
    const int j = free_to_orig_[k];
    lower_(k) = prob_.lower(j) / dscale_(k);
    upper_(k) = prob_.upper(j) / dscale_(k);
  }
  for (int r = 0; r < n_slack_; ++r) {
    lower_(n_free_ + r) = -kInf;
    upper_(n_free_ + r) = 0.0;
  }
  for (int k = 0; k < n_; ++k) {
    has_lower_[k] = std::isfinite(lower_(k));
    has_upper_[k] = std::isfinite(upper_(k));
  }

  const auto& pe = prob_.equalities.jacobian;
  for (int t = 0; t < pe.nnz(); ++t) {
    const int k = orig_to_free_[pe.cols[t]];
    if (k < 0) continue;
    jrow_.push_back(pe.rows[t]);
    jcol_.push_back(k);
    jsrc_.push_back(t);
    jfactor_.push_back(dscale_(k) / eq_scale_(pe.rows[t]));
  }
  const auto& pi = prob_.inequalities.jacobian;
  for (int t = 0; t < pi.nnz(); ++t) {
    const int k = orig_to_free_[pi.cols[t]];
    if (k < 0) continue;
    jrow_.push_back(me_ + pi.rows[t]);
    jcol_.push_back(k);
    jsrc_.push_back(-(t + 2));
    jfactor_.push_back(dscale_(k) / in_scale_(pi.rows[t]));
  }
  for (int r = 0; r < mi_; ++r) {
    jrow_.push_back(me_ + r);
    jcol_.push_back(n_free_ + r);
    jsrc_.push_back(-1);
    jfactor_.push_back(1.0);
  }
  eq_vals_.resize(pe.nnz());
  in_vals_.resize(pi.nnz());
  BuildHessianStructure();
}

Vector InteriorPoint::Unpack(const Vector& x) const {
  Vector z = z_template_;
  for (int k = 0; k < n_free_; ++k) z(free_to_orig_[k]) = x(k) * dscale_(k);
  return z;
}

bool InteriorPoint::EvalObjective(const Vector& x, double& f) const {
  f = obj_scale_ * prob_.objective(Unpack(x));
  return std::isfinite(f);
}

bool InteriorPoint::EvalGradient(const Vector& x, Vector& g) const {
  Vector go = Vector::Zero(n_orig_);
  prob_.gradient(Unpack(x), go);
  g = Vector::Zero(n_);
  for (int k = 0; k < n_free_; ++k) g(k) = obj_scale_ * go(free_to_orig_[k]) * dscale_(k);
  return g.allFinite();
}

int InteriorPoint::EvalConstraints(const Vector& x, Vector& c) const {
  c.resize(m_);
  const Vector z = Unpack(x);
  if (me_ > 0) {
    Vector ce(me_);
    prob_.equalities.evaluate(z, ce);
    for (int r = 0; r < me_; ++r) {
      c(r) = ce(r) / eq_scale_(r);
      if (!std::isfinite(c(r))) return r;
    }
  }
  if (mi_ > 0) {
    Vector ci(mi_);
    prob_.inequalities.evaluate(z, ci);
    for (int r = 0; r < mi_; ++r) {
      c(me_ + r) = ci(r) / in_scale_(r) - x(n_free_ + r);
      if (!std::isfinite(c(me_ + r))) return me_ + r;
    }
  }
  return -1;
}

int InteriorPoint::EvalJacobian(const Vector& x, Vector& jv) const {
  const Vector z = Unpack(x);
  if (me_ > 0) prob_.equalities.jacobian_values(z, std::span<double>(eq_vals_.data(), eq_vals_.size()));
  if (mi_ > 0) prob_.inequalities.jacobian_values(z, std::span<double>(in_vals_.data(), in_vals_.size()));
  const int nnz = static_cast<int>(jrow_.size());
  jv.resize(nnz);
  for (int t = 0; t < nnz; ++t) {
    const int s = jsrc_[t];
    double v;
    if (s >= 0) {
      v = eq_vals_(s);
    } else if (s == -1) {
      v = -1.0;
    } else {
      v = in_vals_(-s - 2);
    }
    jv(t) = v * jfactor_[t];
    if (!std::isfinite(jv(t))) return jrow_[t];
  }
  return -1;
}

void InteriorPoint::JacTransposeTimes(const Vector& jv, const Vector& y, Vector& out) const {
  out = Vector::Zero(n_);
  for (size_t t = 0; t < jrow_.size(); ++t) out(jcol_[t]) += jv(t) * y(jrow_[t]);
}

void InteriorPoint::BuildHessianStructure() {
  adj_.assign(n_, {});
  for (int k = 0; k < n_; ++k) adj_[k].push_back(k);
  auto add_pair = [&](int a, int b) {
    adj_[a].push_back(b);
    adj_[b].push_back(a);
  };
  if (prob_.objective_hessian) {
    for (const auto& [i, j] : *prob_.objective_hessian) {
      const int a = orig_to_free_[i], b = orig_to_free_[j];
      if (a >= 0 && b >= 0) add_pair(a, b);
    }
  } else {
    for (int a = 0; a < n_free_; ++a)
      for (int b = 0; b < a; ++b) add_pair(a, b);
  }
  // Each constraint row couples all of its (free, non-slack) variables.
  std::vector<std::vector<int>> row_vars(m_);
  for (size_t t = 0; t < jrow_.size(); ++t) {
    if (jsrc_[t] == -1) continue;
    row_vars[jrow_[t]].push_back(jcol_[t]);
  }
  for (auto& vars : row_vars) {
    std::sort(vars.begin(), vars.end());
    vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
    for (size_t a = 0; a < vars.size(); ++a)
      for (size_t b = 0; b < a; ++b) add_pair(vars[a], vars[b]);
  }
  adj_offset_.assign(n_ + 1, 0);
  for (int k = 0; k < n_; ++k) {
    auto& v = adj_[k];
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    adj_offset_[k + 1] = adj_offset_[k] + static_cast<int>(v.size());
  }
  hess_col_vals_ = Vector::Zero(adj_offset_[n_]);

  // Greedy distance-2 coloring: columns sharing a row get distinct colors.
  color_.assign(n_, -1);
  std::vector<int> mark;
  for (int j = 0; j < n_; ++j) {
    if (j >= n_free_) {  // slack columns have no curvature
      color_[j] = -1;
      continue;
    }
    for (int i : adj_[j]) {
      for (int k : adj_[i]) {
        if (color_[k] >= 0) {
          if (static_cast<int>(mark.size()) <= color_[k]) mark.resize(color_[k] + 1, -1);
          mark[color_[k]] = j;
        }
      }
    }
    int c = 0;
    while (c < static_cast<int>(mark.size()) && mark[c] == j) ++c;
    color_[j] = c;
    num_colors_ = std::max(num_colors_, c + 1);
  }

  for (int j = 0; j < n_; ++j) {
    for (size_t a = 0; a < adj_[j].size(); ++a) {
      const int i = adj_[j][a];
      if (i < j) continue;
      const auto& ai = adj_[i];
      const int b = static_cast<int>(std::lower_bound(ai.begin(), ai.end(), j) - ai.begin());
      hess_lower_.push_back({i, j, adj_offset_[j] + static_cast<int>(a), adj_offset_[i] + b});
    }
  }
  hess_lower_vals_ = Vector::Zero(static_cast<int>(hess_lower_.size()));

  // KKT structure: Hessian lower part, diagonal, Jacobian, constraint diagonal.
  std::vector<Eigen::Triplet<double>> trip;
  for (const auto& e : hess_lower_) trip.emplace_back(e.row, e.col, 1.0);
  for (int k = 0; k < n_; ++k) trip.emplace_back(k, k, 1.0);
  for (size_t t = 0; t < jrow_.size(); ++t) trip.emplace_back(n_ + jrow_[t], jcol_[t], 1.0);
  for (int r = 0; r < m_; ++r) trip.emplace_back(n_ + r, n_ + r, 1.0);
  kkt_.resize(n_ + m_, n_ + m_);
  kkt_.setFromTriplets(trip.begin(), trip.end());
  kkt_.makeCompressed();
  auto pos = [&](int r, int c) {
    const int* outer = kkt_.outerIndexPtr();
    const int* inner = kkt_.innerIndexPtr();
    const int* it = std::lower_bound(inner + outer[c], inner + outer[c + 1], r);
    return static_cast<int>(it - inner);
  };
  for (const auto& e : hess_lower_) kkt_hess_pos_.push_back(pos(e.row, e.col));
  for (int k = 0; k < n_; ++k) kkt_diag_pos_.push_back(pos(k, k));
  for (size_t t = 0; t < jrow_.size(); ++t) kkt_jac_pos_.push_back(pos(n_ + jrow_[t], jcol_[t]));
  for (int r = 0; r < m_; ++r) kkt_cdiag_pos_.push_back(pos(n_ + r, n_ + r));
}

bool InteriorPoint::ComputeHessian(const Vector& x, const Vector& lambda,
                                   const Vector& grad_lag) {
  hess_col_vals_.setZero();
  Vector xp, g, jv, jtl;
  std::vector<double> step(n_, 0.0);
  for (int color = 0; color < num_colors_; ++color) {
    xp = x;
    bool any = false;
    for (int j = 0; j < n_free_; ++j) {
      if (color_[j] != color) continue;
      double h = 1e-7 * std::max(1.0, std::abs(x(j)));
      const double room_up = has_upper_[j] ? upper_(j) - x(j) : kInf;
      const double room_dn = has_lower_[j] ? x(j) - lower_(j) : kInf;
      if (room_up < 2.0 * h) {
        h = room_dn >= room_up ? -std::min(h, 0.5 * room_dn) : 0.5 * room_up;
      }
      step[j] = h;
      xp(j) += h;
      any = true;
    }
    if (!any) continue;
    if (!EvalGradient(xp, g)) return false;
    if (m_ > 0) {
      if (EvalJacobian(xp, jv) != -1) return false;
      JacTransposeTimes(jv, lambda, jtl);
      g += jtl;
    }
    for (int j = 0; j < n_free_; ++j) {
      if (color_[j] != color) continue;
      for (size_t a = 0; a < adj_[j].size(); ++a) {
        const int i = adj_[j][a];
        hess_col_vals_(adj_offset_[j] + a) = (g(i) - grad_lag(i)) / step[j];
      }
    }
  }
  for (size_t e = 0; e < hess_lower_.size(); ++e) {
    hess_lower_vals_(e) =
        0.5 * (hess_col_vals_(hess_lower_[e].a) + hess_col_vals_(hess_lower_[e].b));
  }
  return hess_lower_vals_.allFinite();
}

bool InteriorPoint::Factorize(const Vector& sigma, double delta_w, double delta_c) {
  double* v = kkt_.valuePtr();
  std::fill(v, v + kkt_.nonZeros(), 0.0);
  for (size_t e = 0; e < hess_lower_.size(); ++e) v[kkt_hess_pos_[e]] += hess_lower_vals_(e);
  for (int k = 0; k < n_; ++k) v[kkt_diag_pos_[k]] += sigma(k) + delta_w;
  for (size_t t = 0; t < jrow_.size(); ++t) v[kkt_jac_pos_[t]] += jv_(t);
  for (int r = 0; r < m_; ++r) v[kkt_cdiag_pos_[r]] -= delta_c;
  if (!analyzed_) {
    ldlt_.analyzePattern(kkt_);
    analyzed_ = true;
  }
  ldlt_.factorize(kkt_);
  if (ldlt_.info() != Eigen::Success) return false;
  const Vector& d = ldlt_.vectorD();
  if (!d.allFinite()) return false;
  int pos = 0, neg = 0;
  for (int i = 0; i < d.size(); ++i) {
    if (d(i) > 0.0) {
      ++pos;
    } else if (d(i) < 0.0) {
      ++neg;
    }
  }
  return pos == n_ && neg == m_;
}

bool InteriorPoint::FactorizeWithCorrection(const Vector& sigma, bool use_hessian,
                                            double& delta_w) {
  if (!use_hessian) hess_lower_vals_.setZero();
  delta_w = 0.0;
  if (Factorize(sigma, 0.0, kDeltaC)) return true;
  delta_w = last_delta_w_ == 0.0 ? 1e-4 : std::max(1e-20, last_delta_w_ / 3.0);
  while (delta_w < 1e40) {
    if (Factorize(sigma, delta_w, kDeltaC)) {
      last_delta_w_ = delta_w;
      return true;
    }
    delta_w *= last_delta_w_ == 0.0 ? 100.0 : 8.0;
  }
  return false;
}

Vector InteriorPoint::SolveKkt(const Vector& rhs, const Vector& sigma, double delta_w,
                               double delta_c) {
  (void)sigma;
  (void)delta_w;
  Vector sol = ldlt_.solve(rhs);
  // Refine against the matrix without the constraint regularization.
  double prev = kInf;
  for (int it = 0; it < 6; ++it) {
    Vector r = rhs - kkt_.selfadjointView<Eigen::Lower>() * sol;
    r.tail(m_) -= delta_c * sol.tail(m_);
    const double rn = r.lpNorm<Eigen::Infinity>();
    if (rn <= 1e-13 * (1.0 + rhs.lpNorm<Eigen::Infinity>()) || rn >= prev) break;
    prev = rn;
    sol += ldlt_.solve(r);
  }
  return sol;
}

Vector InteriorPoint::Sigma() const {
  Vector s = Vector::Zero(n_);
  for (int k = 0; k < n_; ++k) {
    if (has_lower_[k]) s(k) += zl_(k) / (x_(k) - lower_(k));
    if (has_upper_[k]) s(k) += zu_(k) / (upper_(k) - x_(k));
  }
  return s;
}

double InteriorPoint::BarrierPhi(const Vector& x, double f) const {
  double phi = f;
  for (int k = 0; k < n_; ++k) {
    if (has_lower_[k]) {
      phi -= mu_ * std::log(x(k) - lower_(k));
      if (!has_upper_[k]) phi += kKappaD * mu_ * (x(k) - lower_(k));
    }
    if (has_upper_[k]) {
      phi -= mu_ * std::log(upper_(k) - x(k));
      if (!has_lower_[k]) phi += kKappaD * mu_ * (upper_(k) - x(k));
    }
  }
  return phi;
}

Vector InteriorPoint::BarrierGradient(const Vector& x, const Vector& grad) const {
  Vector g = grad;
  for (int k = 0; k < n_; ++k) {
    if (has_lower_[k]) {
      g(k) -= mu_ / (x(k) - lower_(k));
      if (!has_upper_[k]) g(k) += kKappaD * mu_;
    }
    if (has_upper_[k]) {
      g(k) += mu_ / (upper_(k) - x(k));
      if (!has_lower_[k]) g(k) -= kKappaD * mu_;
    }
  }
  return g;
}

double InteriorPoint::FractionToBoundary(const Vector& x, const Vector& dx, double tau) const {
  double alpha = 1.0;
  for (int k = 0; k < n_; ++k) {
    if (has_lower_[k] && dx(k) < 0.0) alpha = std::min(alpha, -tau * (x(k) - lower_(k)) / dx(k));
    if (has_upper_[k] && dx(k) > 0.0) alpha = std::min(alpha, tau * (upper_(k) - x(k)) / dx(k));
  }
  return alpha;
}

double InteriorPoint::FractionToBoundaryZ(const Vector& z, const Vector& dz, double tau) const {
  double alpha = 1.0;
  for (int k = 0; k < z.size(); ++k) {
    if (dz(k) < 0.0 && z(k) > 0.0) alpha = std::min(alpha, -tau * z(k) / dz(k));
  }
  return alpha;
}

Vector InteriorPoint::Project(const Vector& x0) const {
  Vector x = x0;
  for (int k = 0; k < n_; ++k) {
    const double lo = lower_(k), hi = upper_(k);
    const double push = opt_.bound_push;
    if (has_lower_[k] && has_upper_[k]) {
      const double pl = std::min(push * std::max(1.0, std::abs(lo)), 0.5 * push * (hi - lo));
      const double pu = std::min(push * std::max(1.0, std::abs(hi)), 0.5 * push * (hi - lo));
      x(k) = std::clamp(x(k), lo + pl, hi - pu);
    } else if (has_lower_[k]) {
      x(k) = std::max(x(k), lo + push * std::max(1.0, std::abs(lo)));
    } else if (has_upper_[k]) {
      x(k) = std::min(x(k), hi - push * std::max(1.0, std::abs(hi)));
    }
  }
  return x;
}

bool InteriorPoint::IsAcceptableToFilter(double theta, double phi) const {
  for (const auto& e : filter_) {
    if (theta >= e.theta && phi >= e.phi) return false;
  }
  return true;
}

void InteriorPoint::InitMultipliers() {
  lambda_ = Vector::Zero(m_);
  if (m_ == 0) return;
  // Least-squares estimate from [I J^T; J 0].
  hess_lower_vals_.setZero();
  if (!Factorize(Vector::Zero(n_), 1.0, kDeltaC)) return;
  Vector rhs = Vector::Zero(n_ + m_);
  rhs.head(n_) = -(grad_ - zl_ + zu_);
  const Vector sol = SolveKkt(rhs, Vector::Zero(n_), 1.0, kDeltaC);
  const Vector lam = sol.tail(m_);
  if (lam.allFinite() && lam.lpNorm<Eigen::Infinity>() <= 1e3) lambda_ = lam;
}

// Levenberg-Marquardt steps on 0.5 |c|^2 inside the bounds until the
// infeasibility drops and the point is acceptable to the filter.
bool InteriorPoint::Restoration() {
  Vector c_trial;
  const double theta0 = c_.lpNorm<1>();
  double zeta = std::sqrt(mu_);
  for (int it = 0; it < 60; ++it) {
    Vector sigma = Vector::Zero(n_);
    for (int k = 0; k < n_; ++k) {
      if (has_lower_[k]) sigma(k) += mu_ / std::pow(x_(k) - lower_(k), 2);
      if (has_upper_[k]) sigma(k) += mu_ / std::pow(upper_(k) - x_(k), 2);
    }
    hess_lower_vals_.setZero();
    const double lm = std::max(1e-8, std::min(1.0, c_.lpNorm<Eigen::Infinity>()));
    if (!Factorize(sigma, zeta, lm)) return false;
    Vector rhs = Vector::Zero(n_ + m_);
    rhs.tail(m_) = -c_;
    const Vector sol = SolveKkt(rhs, sigma, zeta, lm);
    const Vector dx = sol.head(n_);
    const double tau = std::max(kTauMin, 1.0 - mu_);
    double alpha = FractionToBoundary(x_, dx, tau);
    const double c_norm = c_.norm();
    bool stepped = false;
    for (int ls = 0; ls < 30; ++ls) {
      const Vector xt = x_ + alpha * dx;
      if (EvalConstraints(xt, c_trial) == -1 &&
          c_trial.norm() < c_norm * (1.0 - 1e-4 * alpha)) {
        x_ = xt;
        c_ = c_trial;
        if (EvalJacobian(x_, jv_) != -1) return false;
        stepped = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!stepped) {
      zeta *= 10.0;
      if (zeta > 1e10) return false;
      continue;
    }
    zeta = std::max(1e-10, zeta * 0.5);
    double f;
    if (!EvalObjective(x_, f)) return false;
    const double th = c_.lpNorm<1>();
    if (th <= 0.9 * theta0 && IsAcceptableToFilter(th, BarrierPhi(x_, f))) {
      f_ = f;
      return true;
    }
    if (th <= 1e-3 * opt_.feas_tol) {
      f_ = f;
      return true;
    }
  }
  return false;
}

SolveResult InteriorPoint::Run(const Vector& z0) {
  const auto t_start = Clock::now();
  SolveResult result;
  SolveReport& rep = result.report;
  auto finish = [&](SolveStatus status, const std::string& msg) {
    rep.status = status;
    rep.message = msg;
    result.z = Unpack(x_);
    result.equality_multipliers = lambda_.head(me_) ;
    result.inequality_multipliers = lambda_.tail(mi_);
    for (int r = 0; r < me_; ++r) result.equality_multipliers(r) /= eq_scale_(r) * obj_scale_;
    for (int r = 0; r < mi_; ++r) result.inequality_multipliers(r) /= in_scale_(r) * obj_scale_;
    rep.objective = prob_.objective(result.z);
    rep.max_violation = MaxViolation(prob_, result.z);
    rep.wall_time_seconds = std::chrono::duration<double>(Clock::now() - t_start).count();
    return result;
  };

  if (z0.size() != n_orig_) throw std::invalid_argument("initial point has wrong size");
  lambda_ = Vector::Zero(m_);
  x_ = Vector::Zero(n_);
  for (int k = 0; k < n_free_; ++k) x_(k) = z0(free_to_orig_[k]) / dscale_(k);
  if (!x_.allFinite()) return finish(SolveStatus::kNumericalFailure, "initial point not finite");
  if (mi_ > 0) {
    Vector ci(mi_);
    prob_.inequalities.evaluate(Unpack(x_), ci);
    for (int r = 0; r < mi_; ++r) x_(n_free_ + r) = ci(r) / in_scale_(r);
  }
  x_ = Project(x_);

  // Gradient-based objective scaling.
  obj_scale_ = 1.0;
  if (!EvalGradient(x_, grad_)) {
    return finish(SolveStatus::kNumericalFailure, "objective gradient not finite");
  }
  const double gmax = grad_.lpNorm<Eigen::Infinity>();
  if (gmax > kScaleMax) obj_scale_ = kScaleMax / gmax;
  EvalGradient(x_, grad_);
  if (!EvalObjective(x_, f_)) return finish(SolveStatus::kNumericalFailure, "objective not finite");
  if (int bad = EvalConstraints(x_, c_); bad != -1) {
    rep.offending_constraint = bad;
    return finish(SolveStatus::kNumericalFailure,
                  "constraint " + std::to_string(bad) + " not finite at initial point");
  }
  if (int bad = EvalJacobian(x_, jv_); bad != -1) {
    rep.offending_constraint = bad;
    return finish(SolveStatus::kNumericalFailure,
                  "Jacobian row " + std::to_string(bad) + " not finite at initial point");
  }

  mu_ = opt_.mu_init;
  zl_ = Vector::Zero(n_);
  zu_ = Vector::Zero(n_);
  for (int k = 0; k < n_; ++k) {
    if (has_lower_[k]) zl_(k) = opt_.mu_init < 1e-2 ? mu_ / (x_(k) - lower_(k)) : 1.0;
    if (has_upper_[k]) zu_(k) = opt_.mu_init < 1e-2 ? mu_ / (upper_(k) - x_(k)) : 1.0;
  }
  InitMultipliers();

  const double theta0 = c_.lpNorm<1>();
  theta_max_ = 1e4 * std::max(1.0, theta0);
  theta_min_ = 1e-4 * std::max(1.0, theta0);
  const double mu_min = std::min(opt_.feas_tol, opt_.opt_tol) / 10.0;

  Vector jtl, grad_lag;
  int iter = 0;
  int soft_steps = 0;
  for (;; ++iter) {
    // Optimality measures.
    if (m_ > 0) {
      JacTransposeTimes(jv_, lambda_, jtl);
    } else {
      jtl = Vector::Zero(n_);
    }
    grad_lag = grad_ + jtl;
    const Vector dual = grad_lag - zl_ + zu_;
    const double primal_inf = m_ > 0 ? c_.lpNorm<Eigen::Infinity>() : 0.0;
    double zsum = zl_.lpNorm<1>() + zu_.lpNorm<1>();
    const double sd = std::max(kScaleMax, (lambda_.lpNorm<1>() + zsum) / (m_ + n_)) / kScaleMax;
    const double sc = std::max(kScaleMax, zsum / n_) / kScaleMax;
    auto compl_err = [&](double target) {
      double e = 0.0;
      for (int k = 0; k < n_; ++k) {
        if (has_lower_[k]) e = std::max(e, std::abs(zl_(k) * (x_(k) - lower_(k)) - target));
        if (has_upper_[k]) e = std::max(e, std::abs(zu_(k) * (upper_(k) - x_(k)) - target));
      }
      return e;
    };
    const double dual_inf = dual.lpNorm<Eigen::Infinity>() / sd;
    const double compl0 = compl_err(0.0) / sc;
    rep.iterations = iter;
    rep.stationarity = dual_inf;
    rep.complementarity = compl0;
    if (dual_inf <= opt_.opt_tol && primal_inf <= opt_.feas_tol && compl0 <= opt_.opt_tol) {
      return finish(SolveStatus::kConverged, "converged");
    }
    if (iter >= opt_.max_iterations) {
      return finish(SolveStatus::kMaxIterations, "iteration limit reached");
    }

    // Monotone barrier update.
    for (;;) {
      const double e_mu = std::max({dual_inf, primal_inf, compl_err(mu_) / sc});
      if (e_mu > kKappaEps * mu_ || mu_ <= mu_min) break;
      mu_ = std::max(mu_min, std::min(kKappaMu * mu_, std::pow(mu_, kThetaMu)));
      filter_.clear();
    }

    if (opt_.verbose && opt_.log) {
      *opt_.log << std::setw(5) << iter << std::scientific << std::setprecision(6) << "  f "
                << f_ / obj_scale_ << std::setprecision(2) << "  inf_pr " << primal_inf
                << "  inf_du " << dual_inf << "  mu " << mu_ << "  dw " << last_delta_w_
                << '\n';
    }

    // Newton system.
    if (!ComputeHessian(x_, lambda_, grad_lag)) {
      return finish(SolveStatus::kNumericalFailure, "Hessian approximation not finite");
    }
    const Vector sigma = Sigma();
    double delta_w = 0.0;
    if (!FactorizeWithCorrection(sigma, true, delta_w)) {
      return finish(SolveStatus::kNumericalFailure, "KKT factorization failed");
    }
    if (delta_w == 0.0) last_delta_w_ = 0.0;
    const Vector bgrad = BarrierGradient(x_, grad_);
    Vector rhs(n_ + m_);
    rhs.head(n_) = -(bgrad + jtl);
    rhs.tail(m_) = -c_;
    const Vector sol = SolveKkt(rhs, sigma, delta_w, kDeltaC);
    const Vector dx = sol.head(n_);
    const Vector dlam = sol.tail(m_);
    Vector dzl = Vector::Zero(n_), dzu = Vector::Zero(n_);
    for (int k = 0; k < n_; ++k) {
      if (has_lower_[k]) {
        const double gap = x_(k) - lower_(k);
        dzl(k) = mu_ / gap - zl_(k) - zl_(k) / gap * dx(k);
      }
      if (has_upper_[k]) {
        const double gap = upper_(k) - x_(k);
        dzu(k) = mu_ / gap - zu_(k) + zu_(k) / gap * dx(k);
      }
    }
    const double tau = std::max(kTauMin, 1.0 - mu_);
    const double alpha_max = FractionToBoundary(x_, dx, tau);
    const double alpha_z = std::min(FractionToBoundaryZ(zl_, dzl, tau),
                                    FractionToBoundaryZ(zu_, dzu, tau));

    // Filter line search.
    const double theta = m_ > 0 ? c_.lpNorm<1>() : 0.0;
    const double phi = BarrierPhi(x_, f_);
    const double dphi = bgrad.dot(dx);
    double alpha_min = kGammaTheta;
    if (dphi < 0.0) {
      alpha_min = std::min({kGammaTheta, kGammaPhi * theta / -dphi,
                            kDelta * std::pow(theta, kSTheta) / std::pow(-dphi, kSPhi)});
    }
    alpha_min *= kGammaAlpha;

    const bool tiny_step =
        dx.lpNorm<Eigen::Infinity>() <= 10.0 * std::numeric_limits<double>::epsilon() *
                                            (1.0 + x_.lpNorm<Eigen::Infinity>());

    double alpha = alpha_max;
    bool accepted = false;
    bool f_type = false;
    Vector x_new, c_new;
    double f_new = 0.0;
    auto acceptable = [&](double a, double th_t, double ph_t, bool& ftype) {
      if (th_t > theta_max_) return false;
      if (!IsAcceptableToFilter(th_t, ph_t)) return false;
      const bool switching =
          dphi < 0.0 && a * std::pow(-dphi, kSPhi) > kDelta * std::pow(theta, kSTheta);
      if (theta <= theta_min_ && switching) {
        ftype = true;
        return ph_t <= phi + kEta * a * dphi;
      }
      ftype = false;
      return th_t <= (1.0 - kGammaTheta) * theta || ph_t <= phi - kGammaPhi * theta;
    };

    for (int trial = 0; !accepted; ++trial) {
      x_new = x_ + alpha * dx;
      bool ok = EvalObjective(x_new, f_new) && EvalConstraints(x_new, c_new) == -1;
      if (ok) {
        const double th_t = m_ > 0 ? c_new.lpNorm<1>() : 0.0;
        const double ph_t = BarrierPhi(x_new, f_new);
        if (std::isfinite(ph_t) && (tiny_step || acceptable(alpha, th_t, ph_t, f_type))) {
          accepted = true;
          break;
        }
        // Second-order correction on the first trial point.
        if (trial == 0 && m_ > 0 && th_t >= theta) {
          Vector c_soc = alpha * c_ + c_new;
          double theta_soc_old = theta;
          double alpha_soc = alpha;
          for (int p = 0; p < kMaxSoc; ++p) {
            Vector rhs_soc(n_ + m_);
            rhs_soc.head(n_) = -(bgrad + jtl);
            rhs_soc.tail(m_) = -c_soc;
            const Vector dx_soc = SolveKkt(rhs_soc, sigma, delta_w, kDeltaC).head(n_);
            alpha_soc = FractionToBoundary(x_, dx_soc, tau);
            const Vector x_soc = x_ + alpha_soc * dx_soc;
            double f_soc;
            Vector c_s;
            if (!EvalObjective(x_soc, f_soc) || EvalConstraints(x_soc, c_s) != -1) break;
            const double th_soc = c_s.lpNorm<1>();
            const double ph_soc = BarrierPhi(x_soc, f_soc);
            if (std::isfinite(ph_soc) && acceptable(alpha, th_soc, ph_soc, f_type)) {
              x_new = x_soc;
              f_new = f_soc;
              c_new = c_s;
              alpha = alpha_soc;
              accepted = true;
              break;
            }
            if (th_soc > kKappaSoc * theta_soc_old) break;
            theta_soc_old = th_soc;
            c_soc = alpha_soc * c_soc + c_s;
          }
          if (accepted) break;
        }
      }
      alpha *= 0.5;
      if (alpha < alpha_min) break;
    }

    // Soft restoration: take the primal-dual step if it reduces the barrier
    // KKT error, before falling back to the feasibility restoration.
    if (!accepted && soft_steps < kMaxSoftSteps) {
      const Vector xt = x_ + alpha_max * dx;
      Vector gt, jt, ct, jtl_t;
      double ft = 0.0;
      if (EvalObjective(xt, ft) && EvalConstraints(xt, ct) == -1 && EvalGradient(xt, gt) &&
          (m_ == 0 || EvalJacobian(xt, jt) == -1)) {
        const Vector lt = lambda_ + alpha_max * dlam;
        const Vector zlt = zl_ + alpha_z * dzl, zut = zu_ + alpha_z * dzu;
        if (m_ > 0) {
          JacTransposeTimes(jt, lt, jtl_t);
        } else {
          jtl_t = Vector::Zero(n_);
        }
        double ce = 0.0;
        for (int k = 0; k < n_; ++k) {
          if (has_lower_[k]) ce = std::max(ce, std::abs(zlt(k) * (xt(k) - lower_(k)) - mu_));
          if (has_upper_[k]) ce = std::max(ce, std::abs(zut(k) * (upper_(k) - xt(k)) - mu_));
        }
        const double e_trial =
            std::max({(gt + jtl_t - zlt + zut).lpNorm<Eigen::Infinity>() / sd,
                      m_ > 0 ? ct.lpNorm<Eigen::Infinity>() : 0.0, ce / sc});
        const double e_now = std::max({dual_inf, primal_inf, compl_err(mu_) / sc});
        if (std::isfinite(e_trial) && e_trial <= (1.0 - 1e-4) * e_now) {
          x_new = xt;
          f_new = ft;
          c_new = ct;
          alpha = alpha_max;
          f_type = true;
          accepted = true;
          ++soft_steps;
        }
      }
    } else if (accepted) {
      soft_steps = 0;
    }

    if (!accepted) {
      soft_steps = 0;
      filter_.push_back({(1.0 - kGammaTheta) * theta, phi - kGammaPhi * theta});
      if (m_ == 0 || !Restoration()) {
        if (m_ > 0 && c_.lpNorm<Eigen::Infinity>() > opt_.feas_tol) {
          return finish(SolveStatus::kInfeasibleStationary,
                        "restoration failed to reduce infeasibility");
        }
        return finish(SolveStatus::kNumericalFailure, "line search failed");
      }
      if (!EvalGradient(x_, grad_)) {
        return finish(SolveStatus::kNumericalFailure, "objective gradient not finite");
      }
      if (int bad = EvalJacobian(x_, jv_); bad != -1) {
        rep.offending_constraint = bad;
        return finish(SolveStatus::kNumericalFailure, "Jacobian not finite");
      }
      for (int k = 0; k < n_; ++k) {
        if (has_lower_[k]) zl_(k) = std::min(zl_(k), 1e3);
        if (has_upper_[k]) zu_(k) = std::min(zu_(k), 1e3);
      }
      InitMultipliers();
      continue;
    }
    if (!f_type) filter_.push_back({(1.0 - kGammaTheta) * theta, phi - kGammaPhi * theta});

    x_ = x_new;
    f_ = f_new;
    c_ = c_new;
    lambda_ += alpha * dlam;
    zl_ += alpha_z * dzl;
    zu_ += alpha_z * dzu;
    for (int k = 0; k < n_; ++k) {
      if (has_lower_[k]) {
        const double gap = x_(k) - lower_(k);
        zl_(k) = std::clamp(zl_(k), mu_ / (kKappaSigma * gap), kKappaSigma * mu_ / gap);
      }
      if (has_upper_[k]) {
        const double gap = upper_(k) - x_(k);
        zu_(k) = std::clamp(zu_(k), mu_ / (kKappaSigma * gap), kKappaSigma * mu_ / gap);
      }
    }
    if (!EvalGradient(x_, grad_)) {
      return finish(SolveStatus::kNumericalFailure, "objective gradient not finite");
    }
    if (int bad = EvalJacobian(x_, jv_); bad != -1) {
      rep.offending_constraint = bad;
      return finish(SolveStatus::kNumericalFailure,
                    "Jacobian row " + std::to_string(bad) + " not finite");
    }
  }
}

}  // namespace

SolveResult Solve(const NlpProblem& problem, const Vector& z0, const SolverOptions& options) {
  InteriorPoint ip(problem, options);
  return ip.Run(z0);
}

}  // namespace toppquad::nlp
