#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "toppquad/baselines.hpp"
#include "toppquad/errors.hpp"

namespace toppquad {
namespace {

WaypointSet RandomWaypoints(unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  WaypointSet w;
  for (int i = 0; i < 4; ++i) w.positions.emplace_back(u(rng), u(rng), u(rng));
  return w;
}

WaypointSet Line(double length) {
  WaypointSet w;
  w.positions = {Vec3(0, 0, 1), Vec3(length, 0, 1)};
  return w;
}

ConvexToppSpec Spec(double v_max, bool thrust) {
  ConvexToppSpec s;
  s.v_max = v_max;
  s.include_thrust_bound = thrust;
  return s;
}

double Quadrature(const std::vector<double>& h, double ds) {
  double t = 0.0;
  for (size_t i = 0; i + 1 < h.size(); ++i) t += 2.0 * ds / (std::sqrt(h[i]) + std::sqrt(h[i + 1]));
  return t;
}

TEST(ConvexTopp, HoverIsWithinTheThrustBound) {
  const QuadParams p = QuadParams::CrazyFlie();
  EXPECT_NEAR(4.0 * 0.14375 / 0.032, 17.96875, 1e-12);
  EXPECT_LT(p.gravity.norm(), p.u_max.sum() / p.mass);
}

TEST(ConvexTopp, InvalidSpecThrows) {
  const PathGrid grid = BuildGrid(ToGeometric(FitMinDerivative(Line(5.0), SeedOrder::kSnap, 1.0)), 20);
  ConvexToppSpec s = Spec(0.0, false);
  EXPECT_THROW(ToppVel(grid, s), ConfigError);
  s = Spec(1.0, false);
  s.lambda = 0.0;
  EXPECT_THROW(ToppVel(grid, s), ConfigError);
}

TEST(ConvexTopp, TinyLineMatchesLatticeSearch) {
  const PathGrid grid = BuildGrid(ToGeometric(FitMinDerivative(Line(5.0), SeedOrder::kSnap, 1.0)), 8);
  ConvexToppSpec spec = Spec(2.0, false);
  spec.lambda = 1e-9;
  const ConvexToppResult r = ToppVel(grid, spec);
  ASSERT_TRUE(r.success) << r.report.message;

  // Exhaustive search over h_i = k / K * bound_i at the interior nodes.
  constexpr int kLevels = 7;
  std::vector<double> ub(grid.nodes());
  for (int i = 0; i < grid.nodes(); ++i) ub[i] = 4.0 / grid.d1[i].squaredNorm();
  std::vector<double> h(grid.nodes(), 0.0);
  double best = std::numeric_limits<double>::infinity();
  std::function<void(int)> search = [&](int i) {
    if (i == grid.n) {
      best = std::min(best, Quadrature(h, grid.ds));
      return;
    }
    for (int k = 1; k <= kLevels; ++k) {
      h[i] = ub[i] * k / kLevels;
      search(i + 1);
    }
  };
  search(1);
  EXPECT_NEAR(r.total_time + r.regularization, best, 0.01 * best);
}

TEST(ConvexTopp, LineSpeedPlateausAtTheBound) {
  const GeometricPath path = ToGeometric(FitMinDerivative(Line(20.0), SeedOrder::kSnap, 4.0));
  const PathGrid grid = BuildGrid(path, 200);
  const double v = 1.5;
  const ConvexToppResult r = ToppVel(grid, Spec(v, false));
  ASSERT_TRUE(r.success) << r.report.message;
  double top = 0.0;
  for (int i = 0; i < grid.nodes(); ++i) {
    const double speed = std::sqrt(r.profile.h[i]) * grid.d1[i].norm();
    EXPECT_LE(speed, v * (1.0 + 1e-6)) << i;
    top = std::max(top, speed);
  }
  const int mid = grid.n / 2;
  EXPECT_NEAR(std::sqrt(r.profile.h[mid]) * grid.d1[mid].norm(), v, 0.01 * v);
  EXPECT_NEAR(top, v, 0.01 * v);
}

TEST(ConvexTopp, IntegratorConstraintsHold) {
  const PathGrid grid = BuildGrid(ToGeometric(FitMinDerivative(RandomWaypoints(2), SeedOrder::kSnap, 5.0)), 120);
  const ConvexToppResult r = ToppAcc(grid, QuadParams::CrazyFlie(), Spec(5.0, true));
  ASSERT_TRUE(r.success);
  const CubicSpeedProfile& p = r.profile;
  const double ds = p.ds;
  EXPECT_EQ(p.h.front(), 0.0);
  EXPECT_EQ(p.h.back(), 0.0);
  for (int i = 0; i < p.intervals(); ++i) {
    const double j = p.hppp[i];
    EXPECT_NEAR(p.h[i + 1], p.h[i] + ds * p.hp[i] + 0.5 * ds * ds * p.hpp[i] + ds * ds * ds * j / 6.0,
                1e-6);
    EXPECT_NEAR(p.hp[i + 1], p.hp[i] + ds * p.hpp[i] + 0.5 * ds * ds * j, 1e-6);
    EXPECT_NEAR(p.hpp[i + 1], p.hpp[i] + ds * j, 1e-6);
  }
}

TEST(ConvexTopp, OrderingsOnRandomPaths) {
  const QuadParams params = QuadParams::CrazyFlie();
  const double f_max = params.u_max.sum() / params.mass;
  int gap = 0;
  for (unsigned seed = 1; seed <= 20; ++seed) {
    const GeometricPath path = ToGeometric(FitMinDerivative(RandomWaypoints(seed), SeedOrder::kSnap, 5.0));
    const PathGrid grid = BuildGrid(path, 150);
    const ConvexToppResult vel = ToppVel(grid, Spec(5.0, false));
    const ConvexToppResult acc = ToppAcc(grid, params, Spec(5.0, true));
    ASSERT_TRUE(vel.success && acc.success) << seed;
    EXPECT_GE(acc.total_time + acc.regularization,
              (vel.total_time + vel.regularization) * (1.0 - 1e-6)) << seed;
    EXPECT_GE(acc.total_time, vel.total_time * (1.0 - 1e-6)) << seed;

    ConvexToppSpec fast = Spec(10.0, false);
    const ConvexToppResult vel2 = ToppVel(grid, fast);
    ASSERT_TRUE(vel2.success);
    EXPECT_LE(vel2.total_time, vel.total_time * (1.0 + 1e-6)) << seed;

    for (int i = 0; i < grid.nodes(); ++i) {
      const Vec3 a = 0.5 * grid.d1[i] * acc.profile.hp[i] + grid.d2[i] * acc.profile.h[i];
      EXPECT_LE((a - params.gravity).norm(), f_max * (1.0 + 1e-6)) << seed << " node " << i;
    }
    const ReparameterizedTrajectory traj(path, acc.profile);
    if (!ScanThrusts(traj, params, 0.01).Within(params.u_min, params.u_max)) ++gap;
  }
  EXPECT_GE(gap, 1);
}

TEST(ConvexTopp, SmallerLambdaNeverSlows) {
  for (unsigned seed : {4u, 5u, 6u}) {
    const PathGrid grid =
        BuildGrid(ToGeometric(FitMinDerivative(RandomWaypoints(seed), SeedOrder::kSnap, 5.0)), 150);
    double prev = std::numeric_limits<double>::infinity();
    for (double lambda : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7}) {
      ConvexToppSpec s = Spec(5.0, true);
      s.lambda = lambda;
      const ConvexToppResult r = ToppAcc(grid, QuadParams::CrazyFlie(), s);
      ASSERT_TRUE(r.success) << seed << " " << lambda;
      EXPECT_LE(r.total_time, prev * (1.0 + 1e-6)) << seed << " " << lambda;
      prev = r.total_time;
    }
  }
}

std::shared_ptr<const FlatTrajectory> Seed(unsigned seed, double v) {
  return std::make_shared<PolynomialTrajectory>(
      FitMinDerivative(RandomWaypoints(seed), SeedOrder::kSnap, v));
}

bool FeasibleByScan(const FlatTrajectory& base, const QuadParams& p, double alpha) {
  const TimeScaledTrajectory t(std::shared_ptr<const FlatTrajectory>(&base, [](auto*) {}), alpha);
  return ScanThrusts(t, p, t.duration() / 20000).Within(p.u_min, p.u_max);
}

TEST(AlphaScale, FeasibleTrajectoryIsLeftAlone) {
  const QuadParams p = QuadParams::CrazyFlie();
  const auto base = Seed(7, 0.5);
  ASSERT_TRUE(FeasibleByScan(*base, p, 1.0));
  const AlphaScaleResult r = AlphaScale(base, p);
  EXPECT_EQ(r.alpha, 1.0);
  EXPECT_DOUBLE_EQ(r.trajectory->duration(), base->duration());
}

TEST(AlphaScale, ResultIsMaximalAndPreservesThePath) {
  const QuadParams p = QuadParams::CrazyFlie();
  int checked = 0;
  for (unsigned seed = 1; checked < 5 && seed < 40; ++seed) {
    const auto base = Seed(seed, 5.0);
    if (FeasibleByScan(*base, p, 1.0)) continue;
    ++checked;
    const AlphaScaleResult r = AlphaScale(base, p);
    ASSERT_LT(r.alpha, 1.0);
    EXPECT_TRUE(FeasibleByScan(*base, p, r.alpha)) << seed;
    EXPECT_FALSE(FeasibleByScan(*base, p, r.alpha / (1.0 - 1e-3))) << seed;
    EXPECT_TRUE(r.extremes.Within(p.u_min, p.u_max));
    EXPECT_NEAR(r.trajectory->duration(), base->duration() / r.alpha, 1e-12 * base->duration());
    for (double f : {0.0, 0.3, 0.77, 1.0}) {
      const double t = f * r.trajectory->duration();
      const Vec3 a = r.trajectory->Evaluate(t).position;
      const Vec3 b = base->Evaluate(std::min(r.alpha * t, base->duration())).position;
      EXPECT_LE((a - b).norm(), 1e-12);
    }
  }
  EXPECT_EQ(checked, 5);
}

TEST(AlphaScale, HoverOutsideBoundsThrows) {
  QuadParams p = QuadParams::CrazyFlie();
  p.u_max = Vec4::Constant(0.05);
  EXPECT_THROW(AlphaScale(Seed(1, 1.0), p), InfeasibleError);
}

}  // namespace
}  // namespace toppquad
