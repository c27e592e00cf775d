#include "toppquad/reparam.hpp"

#include <algorithm>
#include <cmath>

#include "toppquad/errors.hpp"

namespace toppquad {

void ToppDecisionState::CheckSize(int n) const {
  const auto sz = static_cast<size_t>(n);
  if (speed.h.size() != sz || speed.hp.size() != sz || rotation.q.size() != sz ||
      rotation.w.size() != sz || rotation.alpha.size() != sz || u.size() != sz) {
    throw AssemblyError("decision state does not have " + std::to_string(n) + " nodes");
  }
}

double TraversalTime(const std::vector<double>& h, double ds) {
  const auto t = TimeMap(h, ds);
  return t.back();
}

std::vector<double> TimeMap(const std::vector<double>& h, double ds) {
  std::vector<double> t(h.size(), 0.0);
  for (size_t i = 0; i < h.size(); ++i) {
    if (h[i] < 0.0) throw ConfigError("negative square speed at node " + std::to_string(i));
  }
  for (size_t i = 0; i + 1 < h.size(); ++i) {
    const double den = std::sqrt(h[i]) + std::sqrt(h[i + 1]);
    if (den <= 0.0) {
      throw DegenerateIntervalError(
          "interval " + std::to_string(i) + " has zero speed at both ends", static_cast<int>(i));
    }
    t[i + 1] = t[i] + 2.0 * ds / den;
  }
  return t;
}

void MakeSignContinuous(std::vector<Quat>& q) {
  for (size_t i = 1; i < q.size(); ++i) {
    if (q[i].dot(q[i - 1]) < 0.0) q[i] = -q[i];
  }
}

namespace {

std::vector<Vec3> DifferentiateOnGrid(const std::vector<Vec3>& w, double ds) {
  const size_t n = w.size();
  std::vector<Vec3> d(n, Vec3::Zero());
  if (n < 2) return d;
  for (size_t i = 1; i + 1 < n; ++i) d[i] = (w[i + 1] - w[i - 1]) / (2.0 * ds);
  d[0] = (w[1] - w[0]) / ds;
  d[n - 1] = (w[n - 1] - w[n - 2]) / ds;
  return d;
}

// Index k and weight such that value = (1 - weight) * x[k] + weight * x[k + 1].
std::pair<size_t, double> Bracket(const std::vector<double>& times, double t) {
  if (times.size() < 2 || t <= times.front()) return {0, 0.0};
  if (t >= times.back()) return {times.size() - 2, 1.0};
  const size_t k = static_cast<size_t>(std::upper_bound(times.begin(), times.end(), t) -
                                       times.begin()) - 1;
  return {k, (t - times[k]) / (times[k + 1] - times[k])};
}

template <typename T>
T Lerp(const std::vector<T>& x, std::pair<size_t, double> b) {
  if (x.size() == 1) return x[0];
  return (1.0 - b.second) * x[b.first] + b.second * x[b.first + 1];
}

}  // namespace

ToppDecisionState InitialGuessFromSeed(const FlatTrajectory& seed, const PathGrid& grid,
                                       const QuadParams& params) {
  const int n = grid.nodes();
  ToppDecisionState g;
  g.speed.h.assign(n, 1.0);
  g.speed.hp.assign(n, 0.0);
  g.rotation.q.resize(n);
  g.rotation.w.resize(n);
  g.u.resize(n);
  for (int i = 0; i < n; ++i) {
    FlatState fs;
    try {
      fs = FlatToState(seed.Evaluate(grid.s[i]), params);
    } catch (const SingularityError& e) {
      throw SingularityError("initial guess node " + std::to_string(i) + ": " + e.what());
    }
    g.rotation.q[i] = fs.state.attitude;
    g.rotation.w[i] = fs.state.body_rate;
    g.u[i] = fs.thrusts;
  }
  MakeSignContinuous(g.rotation.q);
  g.rotation.alpha = DifferentiateOnGrid(g.rotation.w, grid.ds);
  return g;
}

ToppDecisionState InitialGuessFromStates(const StateSamples& samples, const PathGrid& grid,
                                         const QuadParams& params) {
  const size_t m = samples.times.size();
  if (m == 0 || samples.positions.size() != m) {
    throw ConfigError("state samples need matching times and positions");
  }
  auto usable = [m](size_t size) { return size == m; };
  const int n = grid.nodes();
  ToppDecisionState g;
  g.speed.h.assign(n, 1.0);
  g.speed.hp.assign(n, 0.0);
  g.rotation.q.assign(n, Quat(1.0, 0.0, 0.0, 0.0));
  g.rotation.w.assign(n, Vec3::Zero());
  g.rotation.alpha.assign(n, Vec3::Zero());
  g.u.assign(n, MotorThrusts::Constant(params.HoverThrustPerMotor()));

  std::vector<Quat> attitudes = samples.attitudes;
  MakeSignContinuous(attitudes);
  for (int i = 0; i < n; ++i) {
    const auto b = Bracket(samples.times, grid.s[i]);
    if (usable(attitudes.size())) {
      g.rotation.q[i] = Lerp(attitudes, b).normalized();
    } else if (usable(samples.accelerations.size())) {
      FlatOutput f;
      f.acceleration = Lerp(samples.accelerations, b);
      try {
        g.rotation.q[i] = FlatToState(f, params).state.attitude;
      } catch (const SingularityError&) {
        // keep the identity attitude
      }
    }
    if (usable(samples.body_rates.size())) g.rotation.w[i] = Lerp(samples.body_rates, b);
    if (usable(samples.thrusts.size())) g.u[i] = Lerp(samples.thrusts, b);
  }
  MakeSignContinuous(g.rotation.q);
  if (usable(samples.body_rates.size())) {
    g.rotation.alpha = DifferentiateOnGrid(g.rotation.w, grid.ds);
  }
  return g;
}

}  // namespace toppquad
