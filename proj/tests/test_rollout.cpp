#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <random>

#include "toppquad/baselines.hpp"
#include "toppquad/errors.hpp"
#include "toppquad/rollout.hpp"

namespace toppquad {
namespace {

WaypointSet RandomWaypoints(unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  WaypointSet w;
  for (int i = 0; i < 4; ++i) w.positions.emplace_back(u(rng), u(rng), u(rng));
  return w;
}

ReferenceSample HoverAt(const Vec3& p) {
  ReferenceSample r;
  r.position = p;
  return r;
}

TimedTrajectory HoverTrajectory(const Vec3& p, int samples) {
  TimedTrajectory tr;
  const QuadParams params = QuadParams::CrazyFlie();
  for (int i = 0; i < samples; ++i) {
    tr.t.push_back(0.01 * i);
    tr.position.push_back(p);
    tr.velocity.push_back(Vec3::Zero());
    tr.acceleration.push_back(Vec3::Zero());
    tr.attitude.push_back(Quat(1, 0, 0, 0));
    tr.body_rate.push_back(Vec3::Zero());
    tr.thrust.push_back(MotorThrusts::Constant(params.HoverThrustPerMotor()));
  }
  return tr;
}

TEST(Se3Controller, HoverReferenceGivesHoverThrusts) {
  const QuadParams p = QuadParams::CrazyFlie();
  Se3Controller c(p, ControllerGains{});
  RigidState s;
  s.position = Vec3(1, 2, 3);
  bool clamped = true;
  const MotorThrusts u = c.Update(s, HoverAt(s.position), &clamped);
  EXPECT_FALSE(clamped);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(u(k), p.mass * 9.81 / 4.0, 1e-12);
}

TEST(Se3Controller, PositionErrorBelowRaisesThrust) {
  const QuadParams p = QuadParams::CrazyFlie();
  Se3Controller c(p, ControllerGains{});
  RigidState s;
  const MotorThrusts u = c.Update(s, HoverAt(Vec3(0, 0, 0.1)));
  EXPECT_GT(u.sum(), p.mass * 9.81);
}

TEST(Se3Controller, GainsMustBePositive) {
  ControllerGains g;
  g.kr(2) = 0.0;
  EXPECT_THROW(g.Validate(), ConfigError);
  EXPECT_THROW(Se3Controller(QuadParams::CrazyFlie(), g), ConfigError);
}

// Numeric Jacobian of the continuous closed loop in (p, v, rotation vector,
// body rate) around hover.
TEST(Se3Controller, LinearizedHoverLoopIsStable) {
  const QuadParams p = QuadParams::CrazyFlie();
  auto rhs = [&](const Eigen::Matrix<double, 12, 1>& x) {
    RigidState s;
    s.position = x.segment<3>(0);
    s.velocity = x.segment<3>(3);
    s.attitude = QuatExp(x.segment<3>(6));
    s.body_rate = x.segment<3>(9);
    Se3Controller c(p, ControllerGains{});
    const StateDerivative d = DynamicsRhs(s, c.Update(s, HoverAt(Vec3::Zero())), p);
    Eigen::Matrix<double, 12, 1> f;
    f << d.position_dot, d.velocity_dot,
        2.0 * QuatMultiply(QuatConjugate(s.attitude), d.attitude_dot).tail<3>(), d.body_rate_dot;
    return f;
  };
  Eigen::Matrix<double, 12, 12> a;
  const double e = 1e-6;
  for (int j = 0; j < 12; ++j) {
    Eigen::Matrix<double, 12, 1> x = Eigen::Matrix<double, 12, 1>::Zero();
    x(j) = e;
    const auto fp = rhs(x);
    x(j) = -e;
    a.col(j) = (fp - rhs(x)) / (2.0 * e);
  }
  const Eigen::EigenSolver<Eigen::Matrix<double, 12, 12>> eig(a);
  for (int k = 0; k < 12; ++k) EXPECT_LT(eig.eigenvalues()(k).real(), 0.0) << k;
}

TEST(Propagate, FreeFallMatchesClosedForm) {
  const QuadParams p = QuadParams::CrazyFlie();
  RigidState s;
  s.position = Vec3(1, -2, 5);
  s.velocity = Vec3(0.5, 0.3, 2.0);
  s.attitude = QuatExp(Vec3(0.2, -0.1, 0.4));
  const RigidState out = Propagate(s, MotorThrusts::Zero(), p, 1.0, 1e-3);
  const Vec3 expected = s.position + s.velocity + 0.5 * p.gravity;
  EXPECT_LE((out.position - expected).norm(), 1e-6);
  EXPECT_LE((out.velocity - (s.velocity + p.gravity)).norm(), 1e-6);
}

TEST(Propagate, FourthOrderConvergence) {
  const QuadParams p = QuadParams::CrazyFlie();
  RigidState s;
  s.velocity = Vec3(1.0, 0.0, 0.5);
  s.body_rate = Vec3(2.0, -1.0, 3.0);
  const MotorThrusts u(0.08, 0.079, 0.081, 0.0795);
  const RigidState ref = Propagate(s, u, p, 1.0, 1e-4);
  auto error = [&](double dt) { return (Propagate(s, u, p, 1.0, dt).position - ref.position).norm(); };
  const double ratio = error(0.02) / error(0.01);
  EXPECT_GT(ratio, 12.0);
  EXPECT_LT(ratio, 20.0);
}

TEST(Simulate, HoverSettlesToMillimetres) {
  const QuadParams p = QuadParams::CrazyFlie();
  const TimedTrajectory tr = HoverTrajectory(Vec3(0, 0, 1), 1);
  RolloutOptions o;
  o.settle_window = 6.0;
  o.settle_position = 1e-4;
  o.settle_velocity = 1e-4;
  RigidState s;
  s.position = Vec3(0.05, -0.03, 0.96);
  o.initial = s;
  const RolloutLog log = Simulate(tr, p, ControllerGains{}, o);
  EXPECT_FALSE(log.diverged);
  for (int i = 0; i < log.size(); ++i) {
    if (log.t[i] < 4.0) continue;
    EXPECT_LE(log.position_error[i], 1e-3) << log.t[i];
  }
  EXPECT_LE(log.position_error.back(), 1e-3);
}

TEST(Simulate, LogInvariants) {
  const QuadParams p = QuadParams::CrazyFlie();
  const PolynomialTrajectory seed(FitMinDerivative(RandomWaypoints(3), SeedOrder::kSnap, 1.0));
  const TimedTrajectory tr = SampleFlat(seed, p, 0.01, "min-snap");
  const RolloutLog log = Simulate(tr, p, ControllerGains{});
  ASSERT_GT(log.size(), 1);
  for (int i = 1; i < log.size(); ++i) EXPECT_GT(log.t[i], log.t[i - 1]);
  for (const MotorThrusts& u : log.command) {
    EXPECT_TRUE((u.array() >= p.u_min.array()).all());
    EXPECT_TRUE((u.array() <= p.u_max.array()).all());
  }
  for (const RigidState& s : log.state) EXPECT_NEAR(s.attitude.norm(), 1.0, 1e-9);
  EXPECT_GE(log.t.back(), tr.t.back());
  EXPECT_EQ(log.control_steps, static_cast<int>(std::round(log.t.back() / 0.01)) + 1);
  if (log.settled) {
    EXPECT_GE(log.settle_time, log.reference_duration);
    EXPECT_NEAR(log.t.back() - log.settle_time, RolloutOptions{}.settle_hold, 1e-9);
    for (int i = 0; i < log.size(); ++i) {
      if (log.t[i] < log.settle_time) continue;
      EXPECT_LT(log.position_error[i], 0.02);
      EXPECT_LT(log.velocity_error[i], 0.02);
    }
  } else {
    EXPECT_LT(log.settle_time, 0.0);
  }
}

TEST(Simulate, SlowTrajectoryTracksWithinOnePercentOfLength) {
  const QuadParams p = QuadParams::CrazyFlie();
  for (unsigned seed : {1u, 2u, 3u}) {
    const PolynomialTrajectory traj(FitMinDerivative(RandomWaypoints(seed), SeedOrder::kSnap, 1.0));
    ASSERT_TRUE(ScanThrusts(traj, p, 0.005).Within(p.u_min, p.u_max)) << seed;
    const TimedTrajectory tr = SampleFlat(traj, p, 0.01, "min-snap");
    double length = 0.0;
    for (int i = 1; i < tr.size(); ++i) length += (tr.position[i] - tr.position[i - 1]).norm();
    const RolloutMetrics m = Summarize(Simulate(tr, p, ControllerGains{}));
    RecordProperty("max_error_seed_" + std::to_string(seed), std::to_string(m.max_position_error));
    EXPECT_FALSE(m.diverged);
    EXPECT_TRUE(m.settled);
    EXPECT_LE(m.max_position_error, 0.01 * length) << seed;
  }
}

TEST(Simulate, OverSpeedEngagesTheClamp) {
  const QuadParams p = QuadParams::CrazyFlie();
  const auto base = std::make_shared<PolynomialTrajectory>(
      FitMinDerivative(RandomWaypoints(5), SeedOrder::kSnap, 5.0));
  const AlphaScaleResult feasible = AlphaScale(base, p);
  const TimeScaledTrajectory fast(feasible.trajectory, 2.0);
  const RolloutMetrics slow =
      Summarize(Simulate(SampleFlat(*feasible.trajectory, p, 0.01, "alpha"), p, ControllerGains{}));
  const RolloutMetrics over = Summarize(Simulate(SampleFlat(fast, p, 0.01, "alpha"), p, ControllerGains{}));
  EXPECT_GT(over.clamp_fraction, 0.01);
  EXPECT_GT(over.clamp_fraction, slow.clamp_fraction);
}

TEST(Simulate, DivergenceStopsEarly) {
  const TimedTrajectory tr = HoverTrajectory(Vec3::Zero(), 100);
  RolloutOptions o;
  RigidState s;
  s.position = Vec3(30, 0, 0);
  o.initial = s;
  const RolloutLog log = Simulate(tr, QuadParams::CrazyFlie(), ControllerGains{}, o);
  EXPECT_TRUE(log.diverged);
  EXPECT_EQ(log.size(), 1);
}

TEST(Simulate, RejectsBadInputs) {
  const QuadParams p = QuadParams::CrazyFlie();
  RolloutOptions o;
  o.sim_dt = 0.02;
  EXPECT_THROW(Simulate(HoverTrajectory(Vec3::Zero(), 10), p, ControllerGains{}, o), ConfigError);
  EXPECT_THROW(Simulate(TimedTrajectory{}, p, ControllerGains{}), ConfigError);
}

TEST(Simulate, ExportsLogAndSummary) {
  const RolloutLog log =
      Simulate(HoverTrajectory(Vec3(0, 0, 1), 50), QuadParams::CrazyFlie(), ControllerGains{});
  const std::string dir = ::testing::TempDir();
  ExportRolloutCsv(log, dir + "rollout.csv");
  ExportRolloutSummary(Summarize(log), dir + "rollout.json");
  std::ifstream csv(dir + "rollout.csv");
  std::string line;
  int rows = -1;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, log.size());
  std::ifstream js(dir + "rollout.json");
  const nlohmann::json j = nlohmann::json::parse(js);
  EXPECT_EQ(j["diverged"], false);
  EXPECT_DOUBLE_EQ(j["duration"].get<double>(), log.t.back());
  EXPECT_THROW(ExportRolloutCsv(log, "/nonexistent/dir/x.csv"), IoError);
}

}  // namespace
}  // namespace toppquad
