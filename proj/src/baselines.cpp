#include "toppquad/baselines.hpp"

#include <cmath>
#include <limits>

#include "toppquad/errors.hpp"
#include "toppquad/reparam.hpp"

namespace toppquad {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Per node: h, h', h'', h''' (the last one unused at the final node).
constexpr int kPerNode = 4;

int Idx(int node, int field) { return kPerNode * node + field; }

double SpeedBound(const PathGrid& grid, int i, const std::optional<double>& v_max) {
  if (!v_max) return kInf;
  const double g2 = grid.d1[i].squaredNorm();
  return g2 < 1e-12 ? kInf : (*v_max) * (*v_max) / g2;
}

nlp::Vector InitialProfile(const PathGrid& grid, const nlp::Vector& upper) {
  const int n = grid.n;
  const double ds = grid.ds, len = n * ds;
  std::vector<double> h(n + 1), hp(n + 1), hpp(n + 1);
  for (int i = 0; i <= n; ++i) {
    const double b = std::sin(M_PI * grid.s[i] / len);
    h[i] = std::min(0.5, 0.5 * upper(Idx(i, 0))) * b * b;
  }
  h[0] = h[n] = 0.0;
  for (int i = 0; i <= n; ++i) {
    const int a = std::max(0, i - 1), b = std::min(n, i + 1);
    hp[i] = (h[b] - h[a]) / ((b - a) * ds);
  }
  for (int i = 0; i <= n; ++i) {
    const int a = std::max(0, i - 1), b = std::min(n, i + 1);
    hpp[i] = (hp[b] - hp[a]) / ((b - a) * ds);
  }
  nlp::Vector z = nlp::Vector::Zero(kPerNode * (n + 1));
  for (int i = 0; i <= n; ++i) {
    z(Idx(i, 0)) = h[i];
    z(Idx(i, 1)) = hp[i];
    z(Idx(i, 2)) = hpp[i];
    if (i < n) z(Idx(i, 3)) = (hpp[i + 1] - hpp[i]) / ds;
  }
  return z;
}

nlp::NlpProblem BuildProblem(const PathGrid& grid, const QuadParams* params,
                             const ConvexToppSpec& spec) {
  const int n = grid.n, nodes = grid.nodes();
  const double ds = grid.ds, lambda = spec.lambda;
  nlp::NlpProblem p;
  p.num_variables = kPerNode * nodes;
  p.lower = nlp::Vector::Constant(p.num_variables, -kInf);
  p.upper = nlp::Vector::Constant(p.num_variables, kInf);
  for (int i = 0; i < nodes; ++i) {
    p.lower(Idx(i, 0)) = 0.0;
    p.upper(Idx(i, 0)) = SpeedBound(grid, i, spec.v_max);
  }
  p.lower(Idx(0, 0)) = p.upper(Idx(0, 0)) = 0.0;
  p.lower(Idx(n, 0)) = p.upper(Idx(n, 0)) = 0.0;
  p.lower(Idx(n, 3)) = p.upper(Idx(n, 3)) = 0.0;

  p.objective = [n, ds, lambda](const nlp::Vector& z) {
    double t = 0.0;
    for (int i = 0; i < n; ++i) {
      t += 2.0 * ds /
           (std::sqrt(std::max(0.0, z(Idx(i, 0)))) + std::sqrt(std::max(0.0, z(Idx(i + 1, 0)))));
      t += lambda * z(Idx(i, 3)) * z(Idx(i, 3));
    }
    return t;
  };
  p.gradient = [n, ds, lambda](const nlp::Vector& z, nlp::Vector& g) {
    g.setZero(z.size());
    for (int i = 0; i < n; ++i) {
      const int a = Idx(i, 0), b = Idx(i + 1, 0);
      const double ra = std::sqrt(std::max(0.0, z(a))), rb = std::sqrt(std::max(0.0, z(b)));
      const double common = -ds / ((ra + rb) * (ra + rb));
      if (ra > 0.0) g(a) += common / ra;
      if (rb > 0.0) g(b) += common / rb;
      g(Idx(i, 3)) = 2.0 * lambda * z(Idx(i, 3));
    }
  };
  std::vector<std::pair<int, int>> hess;
  for (int i = 0; i < nodes; ++i) {
    hess.emplace_back(Idx(i, 0), Idx(i, 0));
    if (i < n) {
      hess.emplace_back(Idx(i, 0), Idx(i + 1, 0));
      hess.emplace_back(Idx(i, 3), Idx(i, 3));
    }
  }
  p.objective_hessian = std::move(hess);

  // Exact third-order integrator over each interval.
  const double c2 = 0.5 * ds * ds, c3 = ds * ds * ds / 6.0;
  nlp::ConstraintSet& eq = p.equalities;
  eq.count = 3 * n;
  for (int i = 0; i < n; ++i) {
    const int r = 3 * i;
    for (int k = 0; k < 4; ++k) eq.jacobian.Add(r, Idx(i, k));
    eq.jacobian.Add(r, Idx(i + 1, 0));
    for (int k = 1; k < 4; ++k) eq.jacobian.Add(r + 1, Idx(i, k));
    eq.jacobian.Add(r + 1, Idx(i + 1, 1));
    for (int k = 2; k < 4; ++k) eq.jacobian.Add(r + 2, Idx(i, k));
    eq.jacobian.Add(r + 2, Idx(i + 1, 2));
  }
  eq.evaluate = [n, ds, c2, c3](const nlp::Vector& z, nlp::Vector& c) {
    c.resize(3 * n);
    for (int i = 0; i < n; ++i) {
      const double h = z(Idx(i, 0)), hp = z(Idx(i, 1)), hpp = z(Idx(i, 2)), j = z(Idx(i, 3));
      c(3 * i) = z(Idx(i + 1, 0)) - (h + ds * hp + c2 * hpp + c3 * j);
      c(3 * i + 1) = z(Idx(i + 1, 1)) - (hp + ds * hpp + c2 * j);
      c(3 * i + 2) = z(Idx(i + 1, 2)) - (hpp + ds * j);
    }
  };
  eq.jacobian_values = [n, ds, c2, c3](const nlp::Vector&, std::span<double> v) {
    size_t k = 0;
    for (int i = 0; i < n; ++i) {
      for (double x : {-1.0, -ds, -c2, -c3, 1.0}) v[k++] = x;
      for (double x : {-1.0, -ds, -c2, 1.0}) v[k++] = x;
      for (double x : {-1.0, -ds, 1.0}) v[k++] = x;
    }
  };

  if (params) {
    // |a - g|^2 <= f_max^2 with a = 1/2 gamma' h' + gamma'' h.
    const double f_max = params->u_max.sum() / params->mass;
    const Vec3 gvec = params->gravity;
    auto d1 = grid.d1, d2 = grid.d2;
    nlp::ConstraintSet& in = p.inequalities;
    in.count = nodes;
    for (int i = 0; i < nodes; ++i) {
      in.jacobian.Add(i, Idx(i, 0));
      in.jacobian.Add(i, Idx(i, 1));
    }
    in.evaluate = [=](const nlp::Vector& z, nlp::Vector& c) {
      c.resize(nodes);
      for (int i = 0; i < nodes; ++i) {
        const Vec3 a = 0.5 * d1[i] * z(Idx(i, 1)) + d2[i] * z(Idx(i, 0)) - gvec;
        c(i) = a.squaredNorm() - f_max * f_max;
      }
    };
    in.jacobian_values = [=](const nlp::Vector& z, std::span<double> v) {
      for (int i = 0; i < nodes; ++i) {
        const Vec3 a = 0.5 * d1[i] * z(Idx(i, 1)) + d2[i] * z(Idx(i, 0)) - gvec;
        v[2 * i] = 2.0 * a.dot(d2[i]);
        v[2 * i + 1] = a.dot(d1[i]);
      }
    };
    in.scale = nlp::Vector::Constant(nodes, f_max * f_max);
  }
  return p;
}

ConvexToppResult Run(const PathGrid& grid, const QuadParams* params, const ConvexToppSpec& spec) {
  spec.Validate();
  if (grid.n < 2 || static_cast<int>(grid.d1.size()) != grid.nodes() ||
      static_cast<int>(grid.d2.size()) != grid.nodes()) {
    throw AssemblyError("path grid arrays are inconsistent");
  }
  if (params && (params->gravity.norm() >= params->u_max.sum() / params->mass)) {
    throw InfeasibleError("maximum total thrust cannot balance gravity");
  }
  const nlp::NlpProblem p = BuildProblem(grid, params, spec);
  const nlp::Vector z0 = InitialProfile(grid, p.upper);
  const nlp::SolveResult res = nlp::Solve(p, z0, spec.solver);

  const int n = grid.n;
  ConvexToppResult out;
  out.report = res.report;
  CubicSpeedProfile& prof = out.profile;
  prof.ds = grid.ds;
  for (int i = 0; i <= n; ++i) {
    prof.h.push_back(std::max(0.0, res.z(Idx(i, 0))));
    prof.hp.push_back(res.z(Idx(i, 1)));
    prof.hpp.push_back(res.z(Idx(i, 2)));
    if (i < n) {
      prof.hppp.push_back(res.z(Idx(i, 3)));
      out.regularization += spec.lambda * res.z(Idx(i, 3)) * res.z(Idx(i, 3));
    }
  }
  try {
    out.total_time = TraversalTime(prof.h, grid.ds);
  } catch (const DegenerateIntervalError&) {
    out.total_time = kInf;
  }
  out.success = res.report.converged() && std::isfinite(out.total_time);
  return out;
}

}  // namespace

void ConvexToppSpec::Validate() const {
  if (v_max && !(*v_max > 0.0)) throw ConfigError("v_max must be positive");
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
}

ConvexToppResult ToppVel(const PathGrid& grid, const ConvexToppSpec& spec) {
  return Run(grid, nullptr, spec);
}

ConvexToppResult ToppAcc(const PathGrid& grid, const QuadParams& params,
                         const ConvexToppSpec& spec) {
  return Run(grid, &params, spec);
}

ConvexToppResult SolveConvexTopp(const PathGrid& grid, const QuadParams& params,
                                 const ConvexToppSpec& spec) {
  return spec.include_thrust_bound ? ToppAcc(grid, params, spec) : ToppVel(grid, spec);
}

bool ThrustFeasibleAt(const FlatTrajectory& base, const QuadParams& params, double alpha,
                      const AlphaScaleOptions& opts) {
  const double total = base.duration();
  const int m = std::max(1, opts.samples);
  const double a2 = alpha * alpha;
  for (int k = 0; k <= m; ++k) {
    FlatOutput f = base.Evaluate(total * k / m);
    f.velocity *= alpha;
    f.acceleration *= a2;
    f.jerk *= a2 * alpha;
    f.snap *= a2 * a2;
    f.yaw_rate *= alpha;
    f.yaw_acceleration *= a2;
    MotorThrusts u;
    try {
      u = FlatToState(f, params).thrusts;
    } catch (const SingularityError&) {
      return false;
    }
    if (((u - params.u_min).array() < opts.margin).any() ||
        ((params.u_max - u).array() < opts.margin).any()) {
      return false;
    }
  }
  return true;
}

AlphaScaleResult AlphaScale(std::shared_ptr<const FlatTrajectory> base, const QuadParams& params,
                            const AlphaScaleOptions& opts) {
  if (!base) throw ConfigError("no trajectory to scale");
  if (!(opts.alpha_min > 0.0 && opts.alpha_min <= 1.0 && opts.tolerance > 0.0)) {
    throw ConfigError("invalid alpha scaling options");
  }
  double alpha = 1.0;
  if (!ThrustFeasibleAt(*base, params, 1.0, opts)) {
    double lo = opts.alpha_min, hi = 1.0;
    if (!ThrustFeasibleAt(*base, params, lo, opts)) {
      throw InfeasibleError("thrust bounds are violated even at alpha = " +
                            std::to_string(opts.alpha_min));
    }
    while (hi - lo > opts.tolerance * hi) {
      const double mid = 0.5 * (lo + hi);
      (ThrustFeasibleAt(*base, params, mid, opts) ? lo : hi) = mid;
    }
    alpha = lo;
  }
  AlphaScaleResult out;
  out.alpha = alpha;
  out.trajectory = std::make_shared<TimeScaledTrajectory>(std::move(base), alpha);
  const double dt = out.trajectory->duration() / std::max(1, opts.samples);
  out.extremes = ScanThrusts(*out.trajectory, params, dt);
  return out;
}

}  // namespace toppquad
