#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "toppquad/errors.hpp"
#include "toppquad/timed_trajectory.hpp"

namespace toppquad {
namespace {

WaypointSet RandomWaypoints(unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  WaypointSet w;
  for (int i = 0; i < 4; ++i) w.positions.emplace_back(u(rng), u(rng), u(rng));
  return w;
}

std::string TempFile(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("toppquad_tt_" + name)).string();
}

// Constant square speed on a grid; rotational data are arbitrary but smooth.
ToppSolution ConstantSpeedSolution(const GeometricPath& path, int n, double h) {
  ToppSolution sol;
  sol.grid = BuildGrid(path, n);
  const int nodes = sol.grid.nodes();
  sol.state.speed.h.assign(nodes, h);
  sol.state.speed.hp.assign(nodes, 0.0);
  for (int i = 0; i < nodes; ++i) {
    const double s = sol.grid.s[i];
    sol.state.rotation.q.push_back(QuatExp(Vec3(0.1 * std::sin(s), 0.05 * s, 0.2 * std::cos(s))));
    sol.state.rotation.w.push_back(Vec3(0.1, -0.2, 0.05 * s));
    sol.state.rotation.alpha.push_back(Vec3::Zero());
    sol.state.u.push_back(Vec4::Constant(0.08 + 0.001 * i));
  }
  sol.total_time = TraversalTime(sol.state.speed.h, sol.grid.ds);
  return sol;
}

class Solved : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const QuadParams p = QuadParams::CrazyFlie();
    const auto poly = FitMinDerivative(RandomWaypoints(2), SeedOrder::kSnap, 1.0);
    path_ = new GeometricPath(ToGeometric(poly));
    ToppOptions o;
    o.n = 100;
    o.v_max = 5.0;
    const PathGrid grid = BuildGrid(*path_, o.n);
    sol_ = new ToppSolution(
        SolveToppQuad(grid, p, o, InitialGuessFromSeed(PolynomialTrajectory(poly), grid, p)));
  }
  static void TearDownTestSuite() {
    delete sol_;
    delete path_;
  }
  static GeometricPath* path_;
  static ToppSolution* sol_;
};
GeometricPath* Solved::path_ = nullptr;
ToppSolution* Solved::sol_ = nullptr;

TEST(SampleSolution, NodeSpacedSamplesHitTheNodes) {
  WaypointSet w;
  w.positions = {Vec3(0, 0, 1), Vec3(3, 1, 2)};
  const GeometricPath path = ToGeometric(FitMinDerivative(w, SeedOrder::kSnap, 1.0));
  const ToppSolution sol = ConstantSpeedSolution(path, 50, 4.0);
  const double dt = sol.grid.ds / 2.0;
  const TimedTrajectory tr = SampleSolution(sol, QuadParams::CrazyFlie(), dt);
  ASSERT_EQ(tr.size(), sol.grid.nodes());
  for (int i = 0; i < tr.size(); ++i) {
    EXPECT_NEAR(tr.t[i], i * dt, 1e-12);
    EXPECT_LE((tr.position[i] - sol.grid.gamma[i]).norm(), 1e-9) << i;
    EXPECT_LE((tr.velocity[i] - 2.0 * sol.grid.d1[i]).norm(), 1e-9) << i;
    EXPECT_NEAR(tr.s[i], sol.grid.s[i], 1e-9);
  }
}

TEST(SampleSolution, SampleCountAndEndTime) {
  WaypointSet w;
  w.positions = {Vec3(0, 0, 1), Vec3(5, 0, 1)};
  const PolynomialTrajectory seed(FitMinDerivative(w, SeedOrder::kSnap, 1.0));
  ASSERT_DOUBLE_EQ(seed.duration(), 5.0);
  const TimedTrajectory tr = SampleFlat(seed, QuadParams::CrazyFlie(), 0.01, "min-snap");
  EXPECT_EQ(tr.size(), 501);
  EXPECT_EQ(tr.t.back(), 5.0);
  EXPECT_NO_THROW(tr.Validate());

  const TimedTrajectory odd = SampleFlat(seed, QuadParams::CrazyFlie(), 0.3, "min-snap");
  EXPECT_EQ(odd.size(), 18);
  EXPECT_EQ(odd.t.back(), 5.0);
}

TEST(SampleSolution, CoarsePeriodWarns) {
  WaypointSet w;
  w.positions = {Vec3(0, 0, 1), Vec3(3, 1, 2)};
  const ToppSolution sol =
      ConstantSpeedSolution(ToGeometric(FitMinDerivative(w, SeedOrder::kSnap, 1.0)), 50, 4.0);
  std::vector<std::string> warnings;
  SampleSolution(sol, QuadParams::CrazyFlie(), sol.grid.ds / 4.0, nullptr, &warnings);
  EXPECT_TRUE(warnings.empty());
  SampleSolution(sol, QuadParams::CrazyFlie(), sol.grid.ds, nullptr, &warnings);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST_F(Solved, InterpolantMatchesNodes) {
  ASSERT_TRUE(sol_->success) << sol_->failure_reason;
  const SolutionInterpolant it(*sol_, path_);
  const auto& nt = it.node_times();
  for (int i = 0; i < sol_->grid.nodes(); i += 7) {
    const FlatOutput f = it.Evaluate(nt[i]);
    const double r = std::sqrt(std::max(0.0, sol_->state.speed.h[i]));
    EXPECT_LE((f.position - sol_->grid.gamma[i]).norm(), 1e-9) << i;
    EXPECT_LE((f.velocity - r * sol_->grid.d1[i]).norm(), 1e-9) << i;
    Quat q;
    Vec3 w;
    it.Attitude(nt[i], q, w);
    Quat qi = sol_->state.rotation.q[i].normalized();
    EXPECT_GE(std::abs(q.dot(qi)), 1.0 - 1e-12) << i;
    EXPECT_LE((w - r * sol_->state.rotation.w[i]).norm(), 1e-8 * (1.0 + w.norm())) << i;
  }
  EXPECT_EQ(it.duration(), sol_->total_time);
}

// Monotone approach to the end quaternion holds for short intervals, where
// the rotation swept at either endpoint rate is small.
TEST_F(Solved, QuaternionSplineIsUnitAndMonotone) {
  const SolutionInterpolant it(*sol_);
  const auto& nt = it.node_times();
  size_t short_intervals = 0;
  for (size_t i = 0; i + 1 < nt.size(); ++i) {
    Quat q_end, q_start, q;
    Vec3 w, w_start;
    it.Attitude(nt[i + 1], q_end, w);
    it.Attitude(nt[i], q_start, w_start);
    for (int k = 0; k <= 10; ++k) {
      it.Attitude(nt[i] + (nt[i + 1] - nt[i]) * k / 10.0, q, w);
      EXPECT_NEAR(q.norm(), 1.0, 1e-9);
    }
    it.Attitude(nt[i + 1], q_end, w);
    const double T = nt[i + 1] - nt[i];
    if (std::max(w.norm(), w_start.norm()) * T > 0.1) continue;
    ++short_intervals;
    double prev = -1.0;
    for (int k = 0; k <= 10; ++k) {
      it.Attitude(nt[i] + (nt[i + 1] - nt[i]) * k / 10.0, q, w);
      const double c = std::abs(q.dot(q_end));
      EXPECT_GE(c, prev - 1e-12) << "interval " << i << " step " << k;
      prev = c;
    }
  }
  EXPECT_GE(2 * short_intervals, nt.size() - 1);
}

TEST_F(Solved, RatesMatchFiniteDifferences) {
  const SolutionInterpolant it(*sol_, path_);
  const auto& nt = it.node_times();
  const double e = 1e-6;
  for (size_t i = 3; i + 1 < nt.size(); i += 11) {
    const double t = 0.37 * nt[i] + 0.63 * nt[i + 1];
    Quat qa, qb, q;
    Vec3 wa, wb, w;
    it.Attitude(t - e, qa, wa);
    it.Attitude(t + e, qb, wb);
    it.Attitude(t, q, w);
    const Quat qdot = (qb - qa) / (2.0 * e);
    const Vec3 w_fd = 2.0 * QuatMultiply(QuatConjugate(q), qdot).tail<3>();
    EXPECT_LE((w - w_fd).norm(), 1e-5 * (1.0 + w.norm())) << i;

    const FlatOutput fa = it.Evaluate(t - e), fb = it.Evaluate(t + e), f = it.Evaluate(t);
    EXPECT_LE((f.velocity - (fb.position - fa.position) / (2.0 * e)).norm(), 1e-6) << i;
    EXPECT_LE((f.acceleration - (fb.velocity - fa.velocity) / (2.0 * e)).norm(), 1e-5) << i;
    EXPECT_LE((f.jerk - (fb.acceleration - fa.acceleration) / (2.0 * e)).norm(), 1e-4) << i;
  }
}

TEST_F(Solved, SampledTrajectoryKeepsTheDuration) {
  const TimedTrajectory tr = SampleSolution(*sol_, QuadParams::CrazyFlie(), 0.01, path_);
  EXPECT_EQ(tr.t.back(), sol_->total_time);
  EXPECT_NO_THROW(tr.Validate());
  // Central differences err by at most dt^2 / 6 times the largest jerk in
  // the stencil, per axis.
  const SolutionInterpolant it(*sol_, path_);
  for (int i = 1; i + 2 < tr.size(); ++i) {
    const double dt = tr.t[i + 1] - tr.t[i];
    const Vec3 fd = (tr.position[i + 1] - tr.position[i - 1]) / (2.0 * dt);
    Vec3 jerk = Vec3::Zero();
    for (int k = 0; k <= 400; ++k)
      jerk = jerk.cwiseMax(it.Evaluate(tr.t[i - 1] + 2.0 * dt * k / 400.0).jerk.cwiseAbs());
    const Vec3 bound = 1.05 * dt * dt / 6.0 * jerk + Vec3::Constant(1e-9);
    for (int a = 0; a < 3; ++a) EXPECT_LE(std::abs(tr.velocity[i](a) - fd(a)), bound(a)) << i;
  }
}

// Motor thrusts recomputed through the flatness map from the smoothed
// reference; a soft property, so statistics are recorded.
TEST_F(Solved, FlatMapThrustsStayNearBounds) {
  const QuadParams p = QuadParams::CrazyFlie();
  const SolutionInterpolant it(*sol_, path_);
  const ThrustExtremes ex = ScanThrusts(it, p, 0.01);
  RecordProperty("max_thrust", std::to_string(ex.max_thrust));
  RecordProperty("min_thrust", std::to_string(ex.min_thrust));
  EXPECT_FALSE(ex.singular);
  EXPECT_LE(ex.max_thrust, 1.05 * p.u_max.maxCoeff());
  EXPECT_GE(ex.min_thrust, p.u_min.minCoeff() - 0.05 * p.u_max.maxCoeff());
}

TEST(TrajectoryIo, CsvAndJsonRoundTrip) {
  const PolynomialTrajectory seed(FitMinDerivative(RandomWaypoints(4), SeedOrder::kSnap, 2.0));
  const TimedTrajectory tr = SampleFlat(seed, QuadParams::CrazyFlie(), 0.05, "min-snap");
  for (TrajectoryFormat f : {TrajectoryFormat::kCsv, TrajectoryFormat::kJson}) {
    const std::string file = TempFile(f == TrajectoryFormat::kCsv ? "rt.csv" : "rt.json");
    ExportTrajectory(tr, file, f);
    const TimedTrajectory back = ImportTrajectory(file, f);
    ASSERT_EQ(back.size(), tr.size());
    for (int i = 0; i < tr.size(); ++i) {
      EXPECT_EQ(back.t[i], tr.t[i]);
      EXPECT_EQ(back.position[i], tr.position[i]);
      EXPECT_EQ(back.velocity[i], tr.velocity[i]);
      EXPECT_EQ(back.acceleration[i], tr.acceleration[i]);
      EXPECT_EQ(back.attitude[i], tr.attitude[i]);
      EXPECT_EQ(back.body_rate[i], tr.body_rate[i]);
      EXPECT_EQ(back.thrust[i], tr.thrust[i]);
    }
    if (f == TrajectoryFormat::kJson) {
      EXPECT_EQ(back.metadata.source, "min-snap");
      EXPECT_EQ(back.metadata.params_hash, ParamsHash(QuadParams::CrazyFlie()));
      EXPECT_EQ(back.jerk, tr.jerk);
    }
    std::remove(file.c_str());
  }
}

TEST(TrajectoryIo, EmptyTrajectoryIsHeaderOnly) {
  const std::string file = TempFile("empty.csv");
  ExportTrajectory(TimedTrajectory{}, file, TrajectoryFormat::kCsv);
  std::ifstream in(file);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 1);
  EXPECT_EQ(ImportTrajectory(file, TrajectoryFormat::kCsv).size(), 0);
  std::remove(file.c_str());
}

TEST(TrajectoryIo, ErrorsNameTheFile) {
  const std::string bad = TempFile("bad.csv");
  {
    std::ofstream out(bad);
    out << "t,x\n1,2\n";
  }
  try {
    ImportTrajectory(bad, TrajectoryFormat::kCsv);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(bad), std::string::npos);
  }
  std::remove(bad.c_str());
  EXPECT_THROW(ExportTrajectory(TimedTrajectory{}, "/nonexistent-dir/x.csv", TrajectoryFormat::kCsv),
               IoError);
  EXPECT_THROW(ParseTrajectoryFormat("xml"), ConfigError);
}

TEST(TimedTrajectory, ValidateRejectsBadSamples) {
  TimedTrajectory tr;
  tr.t = {0.0, 0.0};
  tr.position = tr.velocity = tr.acceleration = tr.body_rate = {Vec3::Zero(), Vec3::Zero()};
  tr.attitude = {Quat(1, 0, 0, 0), Quat(1, 0, 0, 0)};
  tr.thrust = {Vec4::Zero(), Vec4::Zero()};
  EXPECT_THROW(tr.Validate(), ConfigError);
  tr.t = {0.0, 0.1};
  EXPECT_NO_THROW(tr.Validate());
  tr.attitude[1] = Quat(1.0 + 1e-6, 0, 0, 0);
  EXPECT_THROW(tr.Validate(), ConfigError);
}

TEST(ParamsHash, SensitiveToEveryField) {
  const QuadParams a = QuadParams::CrazyFlie();
  QuadParams b = a;
  EXPECT_EQ(ParamsHash(a), ParamsHash(b));
  EXPECT_EQ(ParamsHash(a).size(), 16u);
  b.mass += 1e-12;
  EXPECT_NE(ParamsHash(a), ParamsHash(b));
  b = a;
  b.u_max(3) = 0.2;
  EXPECT_NE(ParamsHash(a), ParamsHash(b));
}

}  // namespace
}  // namespace toppquad
