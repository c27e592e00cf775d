#include "toppquad/topp_nlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "toppquad/errors.hpp"

namespace toppquad {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Quaternion rows are tightened so that converged solutions keep unit norm
// well inside the 1e-7 contract.
constexpr double kQuaternionRowScale = 0.05;

using L = ToppLayout;

Eigen::Matrix<double, 4, 3> QuatRateJacobian(const Quat& q) {
  // q (x) (0, w) = Xi(q) w
  Eigen::Matrix<double, 4, 3> xi;
  xi.row(0) = -q.tail<3>().transpose();
  xi.bottomRows<3>() = q(0) * Mat3::Identity() + Skew(q.tail<3>());
  return xi;
}

// Constraint evaluation shared by the residual and Jacobian callbacks.
class ToppConstraints {
 public:
  ToppConstraints(const PathGrid& grid, const QuadParams& params, bool unit_norm_row)
      : grid_(grid), params_(params), unit_norm_row_(unit_norm_row) {
    layout_.nodes = grid.nodes();
    const int n = grid.n, nodes = grid.nodes();
    rows_.euler_h = 0;
    rows_.euler_w = n;
    rows_.quaternion = 4 * n;
    rows_.translational = 8 * n;
    rows_.rotational = 8 * n + 3 * nodes;
    rows_.unit_norm = 8 * n + 6 * nodes;
    rows_.count = rows_.unit_norm + (unit_norm_row ? 1 : 0);
  }

  const ToppRowLayout& rows() const { return rows_; }

  nlp::Vector RowScales() const {
    nlp::Vector scale = nlp::Vector::Ones(rows_.count);
    const Vec4 umag = params_.u_min.cwiseAbs().cwiseMax(params_.u_max.cwiseAbs());
    Vec4 row_mag;
    for (int r = 0; r < 4; ++r) row_mag(r) = params_.allocation.row(r).cwiseAbs().dot(umag);
    for (int i = 0; i < grid_.nodes(); ++i) {
      for (int k = 0; k < 3; ++k) {
        scale(rows_.translational + 3 * i + k) = row_mag(0);
        scale(rows_.rotational + 3 * i + k) = row_mag(1 + k);
      }
    }
    scale.segment(rows_.quaternion, 4 * grid_.n).setConstant(kQuaternionRowScale);
    return scale;
  }

  void Evaluate(const nlp::Vector& z, nlp::Vector& c) const {
    c.resize(rows_.count);
    const double ds = grid_.ds;
    for (int i = 0; i < grid_.n; ++i) {
      c(rows_.euler_h + i) = H(z, i + 1) - H(z, i) - Hp(z, i) * ds;
      c.segment<3>(rows_.euler_w + 3 * i) = W(z, i + 1) - W(z, i) - A(z, i) * ds;
      c.segment<4>(rows_.quaternion + 4 * i) = Q(z, i + 1) - Propagate(Q(z, i), W(z, i));
    }
    for (int i = 0; i < grid_.nodes(); ++i) {
      c.segment<3>(rows_.translational + 3 * i) = Translational(z, i);
      c.segment<3>(rows_.rotational + 3 * i) = Rotational(z, i);
    }
    if (unit_norm_row_) c(rows_.unit_norm) = Q(z, 0).squaredNorm() - 1.0;
  }

  // Calls put(row, col, value) for every structural nonzero, in a fixed order.
  template <typename Put>
  void Jacobian(const nlp::Vector& z, Put&& put) const {
    const double ds = grid_.ds;
    const Mat3& J = params_.inertia;
    const Mat4& F = params_.allocation;
    const double m = params_.mass;
    for (int i = 0; i < grid_.n; ++i) {
      const int r = rows_.euler_h + i;
      put(r, layout_.Index(i + 1, L::kH), 1.0);
      put(r, layout_.Index(i, L::kH), -1.0);
      put(r, layout_.Index(i, L::kHp), -ds);
    }
    for (int i = 0; i < grid_.n; ++i) {
      for (int k = 0; k < 3; ++k) {
        const int r = rows_.euler_w + 3 * i + k;
        put(r, layout_.Index(i + 1, L::kW + k), 1.0);
        put(r, layout_.Index(i, L::kW + k), -1.0);
        put(r, layout_.Index(i, L::kAlpha + k), -ds);
      }
    }
    for (int i = 0; i < grid_.n; ++i) {
      const Quat q = Q(z, i);
      const Vec3 w = W(z, i);
      const double nq = q.norm();
      const double nu = std::sqrt(1.0 + 0.25 * ds * ds * w.squaredNorm());
      const Mat4 M = Mat4::Identity() + 0.5 * ds * OmegaMatrix(w);
      const Vec4 mq = M * q;
      const Mat4 dq = (M / (nu * nq)) * (Mat4::Identity() - q * q.transpose() / (nq * nq));
      const Eigen::Matrix<double, 4, 3> dw =
          ((0.5 * ds / nu) * QuatRateJacobian(q) -
           mq * (0.25 * ds * ds / (nu * nu * nu)) * w.transpose()) / nq;
      for (int k = 0; k < 4; ++k) {
        const int r = rows_.quaternion + 4 * i + k;
        put(r, layout_.Index(i + 1, L::kQ + k), 1.0);
        for (int j = 0; j < 4; ++j) put(r, layout_.Index(i, L::kQ + j), -dq(k, j));
        for (int j = 0; j < 3; ++j) put(r, layout_.Index(i, L::kW + j), -dw(k, j));
      }
    }
    for (int i = 0; i < grid_.nodes(); ++i) {
      const Quat q = Q(z, i);
      const Vec4 u = U(z, i);
      const double c = F.row(0).dot(u);
      const Vec3 bz = BodyZ(q);
      const Eigen::Matrix<double, 3, 4> bzj = BodyZJacobian(q);
      for (int k = 0; k < 3; ++k) {
        const int r = rows_.translational + 3 * i + k;
        put(r, layout_.Index(i, L::kH), m * grid_.d2[i](k));
        put(r, layout_.Index(i, L::kHp), 0.5 * m * grid_.d1[i](k));
        for (int j = 0; j < 4; ++j) put(r, layout_.Index(i, L::kQ + j), -c * bzj(k, j));
        for (int j = 0; j < 4; ++j) put(r, layout_.Index(i, L::kU + j), -F(0, j) * bz(k));
      }
    }
    for (int i = 0; i < grid_.nodes(); ++i) {
      const double h = H(z, i), hp = Hp(z, i);
      const Vec3 w = W(z, i), a = A(z, i);
      const Vec3 jw = J * w;
      const Vec3 d_h = J * a + w.cross(jw);
      const Vec3 d_hp = 0.5 * jw;
      const Mat3 d_w = 0.5 * hp * J + h * (Skew(w) * J - Skew(jw));
      const Mat3 d_a = h * J;
      for (int k = 0; k < 3; ++k) {
        const int r = rows_.rotational + 3 * i + k;
        put(r, layout_.Index(i, L::kH), d_h(k));
        put(r, layout_.Index(i, L::kHp), d_hp(k));
        for (int j = 0; j < 3; ++j) put(r, layout_.Index(i, L::kW + j), d_w(k, j));
        for (int j = 0; j < 3; ++j) put(r, layout_.Index(i, L::kAlpha + j), d_a(k, j));
        for (int j = 0; j < 4; ++j) put(r, layout_.Index(i, L::kU + j), -F(1 + k, j));
      }
    }
    if (unit_norm_row_) {
      const Quat q = Q(z, 0);
      for (int j = 0; j < 4; ++j) put(rows_.unit_norm, layout_.Index(0, L::kQ + j), 2.0 * q(j));
    }
  }

  Vec3 Translational(const nlp::Vector& z, int i) const {
    const Vec3 accel = 0.5 * grid_.d1[i] * Hp(z, i) + grid_.d2[i] * H(z, i);
    const double c = params_.allocation.row(0).dot(U(z, i));
    return params_.mass * (accel - params_.gravity) - BodyZ(Q(z, i)) * c;
  }

  Vec3 Rotational(const nlp::Vector& z, int i) const {
    const Mat3& J = params_.inertia;
    const Vec3 w = W(z, i);
    const double h = H(z, i);
    return J * (0.5 * w * Hp(z, i) + A(z, i) * h) + w.cross(J * w) * h -
           params_.allocation.bottomRows<3>() * U(z, i);
  }

  Quat Propagate(const Quat& q, const Vec3& w) const {
    const Vec4 mq = q + 0.5 * grid_.ds * OmegaMatrix(w) * q;
    return mq / mq.norm();
  }

 private:
  double H(const nlp::Vector& z, int i) const { return z(layout_.Index(i, L::kH)); }
  double Hp(const nlp::Vector& z, int i) const { return z(layout_.Index(i, L::kHp)); }
  Quat Q(const nlp::Vector& z, int i) const { return z.segment<4>(layout_.Index(i, L::kQ)); }
  Vec3 W(const nlp::Vector& z, int i) const { return z.segment<3>(layout_.Index(i, L::kW)); }
  Vec3 A(const nlp::Vector& z, int i) const { return z.segment<3>(layout_.Index(i, L::kAlpha)); }
  Vec4 U(const nlp::Vector& z, int i) const { return z.segment<4>(layout_.Index(i, L::kU)); }

  PathGrid grid_;
  QuadParams params_;
  bool unit_norm_row_;
  ToppLayout layout_;
  ToppRowLayout rows_;
};

double HUpperBound(const PathGrid& grid, int i, const ToppOptions& opts) {
  if (!opts.v_max) return kInf;
  const double speed2 = grid.d1[i].squaredNorm();
  if (speed2 < 1e-12) return kInf;
  return std::max(*opts.v_max * *opts.v_max / speed2, 2.0 * opts.h_floor);
}

QuadParams EffectiveParams(const QuadParams& params, const ToppOptions& opts) {
  return opts.bidirectional ? params.Bidirectional() : params;
}

}  // namespace

const char* ToString(BoundaryMode mode) {
  return mode == BoundaryMode::kRestToRest ? "rest-to-rest" : "free-end";
}

BoundaryMode ParseBoundaryMode(const std::string& name) {
  if (name == "rest-to-rest" || name == "rest") return BoundaryMode::kRestToRest;
  if (name == "free-end" || name == "free") return BoundaryMode::kFreeEnd;
  throw ConfigError("unknown boundary mode '" + name + "'");
}

void ToppOptions::Validate() const {
  if (v_max && !(*v_max > 0.0)) throw ConfigError("v_max must be positive");
  if (n < 10) throw ConfigError("grid size N must be at least 10");
  if (!(h_floor > 0.0)) throw ConfigError("h floor must be positive");
  if (!(failure_ratio >= 1.0)) throw ConfigError("failure ratio must be at least 1");
  if (!(rate_weight >= 0.0)) throw ConfigError("rate weight must be non-negative");
}

nlp::Vector Pack(const ToppDecisionState& state) {
  const int nodes = state.nodes();
  state.CheckSize(nodes);
  ToppLayout layout{nodes};
  nlp::Vector z(layout.size());
  for (int i = 0; i < nodes; ++i) {
    z(layout.Index(i, L::kH)) = state.speed.h[i];
    z(layout.Index(i, L::kHp)) = state.speed.hp[i];
    z.segment<4>(layout.Index(i, L::kQ)) = state.rotation.q[i];
    z.segment<3>(layout.Index(i, L::kW)) = state.rotation.w[i];
    z.segment<3>(layout.Index(i, L::kAlpha)) = state.rotation.alpha[i];
    z.segment<4>(layout.Index(i, L::kU)) = state.u[i];
  }
  return z;
}

ToppDecisionState Unpack(const nlp::Vector& z, int nodes) {
  ToppLayout layout{nodes};
  if (z.size() != layout.size()) throw AssemblyError("decision vector has the wrong length");
  ToppDecisionState s;
  s.speed.h.resize(nodes);
  s.speed.hp.resize(nodes);
  s.rotation.q.resize(nodes);
  s.rotation.w.resize(nodes);
  s.rotation.alpha.resize(nodes);
  s.u.resize(nodes);
  for (int i = 0; i < nodes; ++i) {
    s.speed.h[i] = z(layout.Index(i, L::kH));
    s.speed.hp[i] = z(layout.Index(i, L::kHp));
    s.rotation.q[i] = z.segment<4>(layout.Index(i, L::kQ));
    s.rotation.w[i] = z.segment<3>(layout.Index(i, L::kW));
    s.rotation.alpha[i] = z.segment<3>(layout.Index(i, L::kAlpha));
    s.u[i] = z.segment<4>(layout.Index(i, L::kU));
  }
  return s;
}

ToppProblem Assemble(const PathGrid& grid, const QuadParams& params,
                     const ToppDecisionState& guess, const ToppOptions& opts) {
  opts.Validate();
  if (grid.n < 1 || static_cast<int>(grid.s.size()) != grid.nodes() ||
      static_cast<int>(grid.d1.size()) != grid.nodes() ||
      static_cast<int>(grid.d2.size()) != grid.nodes()) {
    throw AssemblyError("path grid arrays are inconsistent");
  }
  guess.CheckSize(grid.nodes());

  const int n = grid.n, nodes = grid.nodes();
  const bool rest = opts.boundary == BoundaryMode::kRestToRest;
  ToppProblem out;
  out.params = EffectiveParams(params, opts);
  out.layout.nodes = nodes;
  const ToppLayout& layout = out.layout;
  const int nv = layout.size();

  auto constraints = std::make_shared<ToppConstraints>(grid, out.params, !rest);
  out.rows = constraints->rows();

  nlp::NlpProblem& p = out.problem;
  p.num_variables = nv;
  p.lower = nlp::Vector::Constant(nv, -kInf);
  p.upper = nlp::Vector::Constant(nv, kInf);
  p.variable_scale = nlp::Vector::Ones(nv);
  const Vec4 umag = out.params.u_min.cwiseAbs().cwiseMax(out.params.u_max.cwiseAbs());
  for (int i = 0; i < nodes; ++i) {
    const int ih = layout.Index(i, L::kH);
    p.lower(ih) = opts.h_floor;
    p.upper(ih) = HUpperBound(grid, i, opts);
    p.lower.segment<4>(layout.Index(i, L::kU)) = out.params.u_min;
    p.upper.segment<4>(layout.Index(i, L::kU)) = out.params.u_max;
    p.variable_scale.segment<4>(layout.Index(i, L::kU)) = umag;
  }

  nlp::Vector z0 = Pack(guess);
  for (int i = 0; i < nodes; ++i) {
    auto q = z0.segment<4>(layout.Index(i, L::kQ));
    if (q.norm() > 0.0) q.normalize();
  }
  if (rest) {
    for (int i : {0, n}) {
      const int ih = layout.Index(i, L::kH);
      p.lower(ih) = p.upper(ih) = 0.0;
    }
    const int ihp = layout.Index(n, L::kHp);
    p.lower(ihp) = p.upper(ihp) = 0.0;
    const Quat q0 = z0.segment<4>(layout.Index(0, L::kQ));
    for (int j = 0; j < 4; ++j) {
      const int iq = layout.Index(0, L::kQ + j);
      p.lower(iq) = p.upper(iq) = q0(j);
    }
    // With h = 0 the rotational rows at the end nodes do not involve alpha.
    for (int i : {0, n}) {
      for (int j = 0; j < 3; ++j) {
        const int ia = layout.Index(i, L::kAlpha + j);
        p.lower(ia) = p.upper(ia) = 0.0;
      }
    }
  }
  // Start inside the bounds with h' consistent with h.
  z0 = z0.cwiseMax(p.lower).cwiseMin(p.upper);
  for (int i = 0; i < n; ++i) {
    const int ihp = layout.Index(i, L::kHp);
    if (p.lower(ihp) == p.upper(ihp)) continue;
    z0(ihp) = (z0(layout.Index(i + 1, L::kH)) - z0(layout.Index(i, L::kH))) / grid.ds;
  }
  out.z0 = z0;

  const double ds = grid.ds;
  const double rw = opts.rate_weight;
  p.objective = [layout, n, ds, rw](const nlp::Vector& z) {
    double t = 0.0;
    if (rw > 0.0) {
      for (int i = 0; i <= n; ++i) t += rw * ds * z.segment<3>(layout.Index(i, L::kW)).squaredNorm();
    }
    for (int i = 0; i < n; ++i) {
      t += 2.0 * ds /
           (std::sqrt(std::max(0.0, z(layout.Index(i, L::kH)))) +
            std::sqrt(std::max(0.0, z(layout.Index(i + 1, L::kH)))));
    }
    return t;
  };
  p.gradient = [layout, n, ds, rw](const nlp::Vector& z, nlp::Vector& g) {
    g.setZero(z.size());
    if (rw > 0.0) {
      for (int i = 0; i <= n; ++i) {
        g.segment<3>(layout.Index(i, L::kW)) = 2.0 * rw * ds * z.segment<3>(layout.Index(i, L::kW));
      }
    }
    for (int i = 0; i < n; ++i) {
      const int a = layout.Index(i, L::kH), b = layout.Index(i + 1, L::kH);
      const double ra = std::sqrt(std::max(0.0, z(a))), rb = std::sqrt(std::max(0.0, z(b)));
      const double common = -ds / ((ra + rb) * (ra + rb));
      if (ra > 0.0) g(a) += common / ra;
      if (rb > 0.0) g(b) += common / rb;
    }
  };
  std::vector<std::pair<int, int>> hess;
  for (int i = 0; i < nodes; ++i) {
    hess.emplace_back(layout.Index(i, L::kH), layout.Index(i, L::kH));
    if (i < n) hess.emplace_back(layout.Index(i, L::kH), layout.Index(i + 1, L::kH));
    if (opts.rate_weight > 0.0) {
      for (int k = 0; k < 3; ++k) hess.emplace_back(layout.Index(i, L::kW + k), layout.Index(i, L::kW + k));
    }
  }
  p.objective_hessian = std::move(hess);

  nlp::ConstraintSet& eq = p.equalities;
  eq.count = out.rows.count;
  constraints->Jacobian(z0, [&eq](int r, int c, double) { eq.jacobian.Add(r, c); });
  eq.evaluate = [constraints](const nlp::Vector& z, nlp::Vector& c) {
    constraints->Evaluate(z, c);
  };
  eq.jacobian_values = [constraints](const nlp::Vector& z, std::span<double> v) {
    size_t k = 0;
    constraints->Jacobian(z, [&](int, int, double value) { v[k++] = value; });
  };
  eq.scale = constraints->RowScales();
  return out;
}

ToppSolution SolveToppQuad(const GeometricPath& path, const QuadParams& params,
                           const ToppOptions& opts, const ToppDecisionState& guess) {
  return SolveToppQuad(BuildGrid(path, opts.n), params, opts, guess);
}

ToppSolution SolveToppQuad(const PathGrid& grid, const QuadParams& params,
                           const ToppOptions& opts, const ToppDecisionState& guess) {
  const ToppProblem tp = Assemble(grid, params, guess, opts);
  nlp::SolverOptions so = opts.solver;
  if (opts.warm_start) {
    so.mu_init = std::min(so.mu_init, 1e-6);
    so.bound_push = std::min(so.bound_push, 1e-8);
  }
  const nlp::SolveResult res = nlp::Solve(tp.problem, tp.z0, so);

  ToppSolution sol;
  sol.grid = grid;
  sol.state = Unpack(res.z, grid.nodes());
  sol.report = res.report;
  sol.bidirectional = opts.bidirectional;
  sol.u_min = tp.params.u_min;
  sol.u_max = tp.params.u_max;
  sol.guess_time = TraversalTime(Unpack(tp.z0, grid.nodes()).speed.h, grid.ds);
  if (!res.report.converged()) {
    sol.failure_reason = std::string("solver: ") + nlp::ToString(res.report.status);
    if (!res.report.message.empty()) sol.failure_reason += " (" + res.report.message + ")";
  }
  try {
    std::vector<double> h = sol.state.speed.h;
    for (double& v : h) v = std::max(0.0, v);
    sol.total_time = TraversalTime(h, grid.ds);
  } catch (const DegenerateIntervalError& e) {
    sol.total_time = kInf;
    if (sol.failure_reason.empty()) sol.failure_reason = e.what();
  }
  if (sol.failure_reason.empty() && sol.total_time > opts.failure_ratio * sol.guess_time) {
    sol.failure_reason = "total time exceeds the guess time by more than the failure ratio";
  }
  sol.success = sol.failure_reason.empty();
  return sol;
}

namespace {

ValidationReport Residuals(const PathGrid& grid, const QuadParams& params,
                           const ToppDecisionState& state) {
  state.CheckSize(grid.nodes());
  ToppConstraints con(grid, params, false);
  nlp::Vector c;
  const nlp::Vector z = Pack(state);
  con.Evaluate(z, c);
  const nlp::Vector scaled = c.cwiseQuotient(con.RowScales());
  const ToppRowLayout& r = con.rows();
  auto family_max = [&scaled](int begin, int end) {
    return end > begin ? scaled.segment(begin, end - begin).cwiseAbs().maxCoeff() : 0.0;
  };
  ValidationReport rep;
  rep.euler_h = family_max(r.euler_h, r.euler_w);
  rep.euler_w = family_max(r.euler_w, r.quaternion);
  rep.quaternion_update = family_max(r.quaternion, r.translational);
  rep.translational = family_max(r.translational, r.rotational);
  rep.rotational = family_max(r.rotational, r.unit_norm);
  return rep;
}

}  // namespace

ValidationReport EvaluateResiduals(const PathGrid& grid, const QuadParams& params,
                                   const ToppDecisionState& state) {
  return Residuals(grid, params, state);
}

ValidationReport ValidateSolution(const ToppSolution& sol, const QuadParams& params,
                                  const ToppOptions& opts) {
  const QuadParams eff = EffectiveParams(params, opts);
  ValidationReport rep = Residuals(sol.grid, eff, sol.state);
  const int n = sol.grid.n;
  const auto& st = sol.state;
  for (int i = 0; i <= n; ++i) {
    rep.quaternion_norm = std::max(rep.quaternion_norm, std::abs(st.rotation.q[i].norm() - 1.0));
    const Vec4 over = (st.u[i] - eff.u_max).cwiseMax(eff.u_min - st.u[i]);
    rep.thrust_violation = std::max(rep.thrust_violation, over.maxCoeff());
    const double hmax = HUpperBound(sol.grid, i, opts);
    if (std::isfinite(hmax)) rep.boundary = std::max(rep.boundary, st.speed.h[i] - hmax);
    rep.boundary = std::max(rep.boundary, -st.speed.h[i]);
  }
  if (opts.boundary == BoundaryMode::kRestToRest) {
    rep.boundary = std::max({rep.boundary, std::abs(st.speed.h[0]), std::abs(st.speed.h[n])});
  }

  auto check = [&rep](const char* name, double value, double tol) {
    if (!(value <= tol)) rep.failed.emplace_back(name);
  };
  check("euler_h", rep.euler_h, ValidationReport::kResidualTol);
  check("euler_w", rep.euler_w, ValidationReport::kResidualTol);
  check("quaternion_update", rep.quaternion_update, ValidationReport::kResidualTol);
  check("translational", rep.translational, ValidationReport::kResidualTol);
  check("rotational", rep.rotational, ValidationReport::kResidualTol);
  check("boundary", rep.boundary, ValidationReport::kResidualTol);
  check("quaternion_norm", rep.quaternion_norm, ValidationReport::kNormTol);
  check("thrust_bounds", rep.thrust_violation, ValidationReport::kThrustTol);
  rep.pass = rep.failed.empty();
  return rep;
}

}  // namespace toppquad
