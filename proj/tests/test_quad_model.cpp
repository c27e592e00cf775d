#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "toppquad/errors.hpp"
#include "toppquad/quad_model.hpp"

namespace toppquad {
namespace {

Vec3 RandomVec(std::mt19937& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return Vec3(u(rng), u(rng), u(rng));
}

Quat RandomQuat(std::mt19937& rng) {
  std::normal_distribution<double> nd;
  Quat q(nd(rng), nd(rng), nd(rng), nd(rng));
  return q.normalized();
}

TEST(Skew, ZeroVectorGivesZeroMatrix) { EXPECT_TRUE(Skew(Vec3::Zero()).isZero(0.0)); }

TEST(Skew, KnownEntries) {
  Mat3 expected;
  expected << 0, -3, 2, 3, 0, -1, -2, 1, 0;
  EXPECT_TRUE(Skew(Vec3(1, 2, 3)).isApprox(expected, 0.0));
}

TEST(Skew, MatchesComponentwiseCrossProduct) {
  std::mt19937 rng(7);
  for (int k = 0; k < 100; ++k) {
    const Vec3 w = RandomVec(rng, 5.0), x = RandomVec(rng, 5.0);
    const Vec3 cross(w(1) * x(2) - w(2) * x(1), w(2) * x(0) - w(0) * x(2),
                     w(0) * x(1) - w(1) * x(0));
    EXPECT_LE((Skew(w) * x - cross).norm(), 1e-13);
    EXPECT_LE((Skew(w) + Skew(w).transpose()).norm(), 0.0);
  }
}

TEST(QuadParams, CrazyFlieIsValid) {
  const QuadParams p = QuadParams::CrazyFlie();
  EXPECT_DOUBLE_EQ(p.mass, 0.032);
  EXPECT_DOUBLE_EQ(p.u_max(0), 0.14375);
  EXPECT_DOUBLE_EQ(p.u_min(0), 0.0);
  EXPECT_NEAR(p.HoverThrustPerMotor(), 0.032 * 9.81 / 4.0, 1e-15);
  EXPECT_NEAR(p.HoverThrustPerMotor(), 0.07848, 1e-12);
  EXPECT_LT(p.HoverThrustPerMotor(), p.u_max(0));
}

TEST(QuadParams, RejectsInvalidParameters) {
  const QuadParams base = QuadParams::CrazyFlie();
  EXPECT_THROW(QuadParams::Make(0.0, base.inertia, base.allocation, base.u_min, base.u_max),
               ConfigError);
  Mat3 bad_inertia = base.inertia;
  bad_inertia(0, 0) = -1e-5;
  EXPECT_THROW(QuadParams::Make(base.mass, bad_inertia, base.allocation, base.u_min, base.u_max),
               ConfigError);
  Mat4 singular = base.allocation;
  singular.row(3) = singular.row(2);
  EXPECT_THROW(QuadParams::Make(base.mass, base.inertia, singular, base.u_min, base.u_max),
               ConfigError);
  EXPECT_THROW(QuadParams::Make(base.mass, base.inertia, base.allocation, base.u_max, base.u_max),
               ConfigError);
}

TEST(Dynamics, HoverIsAnEquilibrium) {
  const QuadParams p = QuadParams::CrazyFlie();
  RigidState s;
  const auto d = DynamicsRhs(s, MotorThrusts::Constant(p.HoverThrustPerMotor()), p);
  EXPECT_LE(d.velocity_dot.norm(), 1e-12);
  EXPECT_LE(d.body_rate_dot.norm(), 1e-12);
  EXPECT_LE(d.attitude_dot.norm(), 0.0);
}

TEST(Dynamics, ZeroThrustIsFreeFall) {
  const QuadParams p = QuadParams::CrazyFlie();
  const auto d = DynamicsRhs(RigidState{}, MotorThrusts::Zero(), p);
  EXPECT_TRUE(d.velocity_dot.isApprox(p.gravity, 1e-15));
}

TEST(Dynamics, RhsMatchesFiniteDifferenceOfRk4) {
  const QuadParams p = QuadParams::CrazyFlie();
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> uu(0.0, 0.14375);
  for (int trial = 0; trial < 20; ++trial) {
    RigidState s;
    s.position = RandomVec(rng, 3.0);
    s.velocity = RandomVec(rng, 2.0);
    s.attitude = RandomQuat(rng);
    s.body_rate = RandomVec(rng, 4.0);
    const MotorThrusts u(uu(rng), uu(rng), uu(rng), uu(rng));
    const auto d = DynamicsRhs(s, u, p);
    double prev = 1e300;
    for (double dt : {1e-3, 1e-4, 1e-5}) {
      const RigidState n = Rk4Step(s, u, p, dt);
      double err = ((n.position - s.position) / dt - d.position_dot).norm();
      err = std::max(err, ((n.velocity - s.velocity) / dt - d.velocity_dot).norm());
      err = std::max(err, ((n.attitude - s.attitude) / dt - d.attitude_dot).norm());
      err = std::max(err, ((n.body_rate - s.body_rate) / dt - d.body_rate_dot).norm() /
                              std::max(1.0, d.body_rate_dot.norm()));
      EXPECT_LE(err, 50.0 * dt * (1.0 + d.body_rate_dot.norm())) << "dt " << dt;
      EXPECT_LT(err, prev);
      prev = err;
    }
  }
}

TEST(Dynamics, QuaternionKinematicsPreservesNorm) {
  // Integrate q' = 0.5 Omega(w(t)) q with a time-varying rate and no renormalization.
  const QuadParams p = QuadParams::CrazyFlie();
  RigidState s;
  s.attitude = Quat(0.8, 0.2, -0.4, 0.4).normalized();
  s.body_rate = Vec3(2.0, -1.0, 3.0);
  const MotorThrusts u(0.05, 0.11, 0.07, 0.09);
  const double dt = 1e-4;
  for (int k = 0; k < 10000; ++k) s = Rk4Step(s, u, p, dt);
  EXPECT_LT(std::abs(s.attitude.norm() - 1.0), 1e-6);
  EXPECT_GT(s.body_rate.norm(), 1.0);
}

TEST(Allocation, EqualThrustsGiveCollectiveOnly) {
  const QuadParams p = QuadParams::CrazyFlie();
  const Wrench w = AllocateWrench(MotorThrusts::Constant(0.05), p);
  EXPECT_NEAR(w.thrust, 0.2, 1e-15);
  EXPECT_TRUE(w.torque.isApprox(p.allocation.bottomRows<3>() * Vec4::Constant(0.05)));
  EXPECT_LE(w.torque.norm(), 1e-15);
}

TEST(Allocation, RoundTripIsExact) {
  const QuadParams p = QuadParams::CrazyFlie();
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> uu(-0.2, 0.2);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const MotorThrusts u(uu(rng), uu(rng), uu(rng), uu(rng));
    const MotorThrusts back = InvertAllocation(AllocateWrench(u, p), p);
    worst = std::max(worst, (back - u).cwiseAbs().maxCoeff());
    // Oracle: direct dense solve.
    const Wrench w = AllocateWrench(u, p);
    const Vec4 rhs(w.thrust, w.torque(0), w.torque(1), w.torque(2));
    EXPECT_LE((p.allocation.fullPivLu().solve(rhs) - back).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(Allocation, HoverWrenchGivesEqualThrusts) {
  const QuadParams p = QuadParams::CrazyFlie();
  Wrench w;
  w.thrust = p.mass * 9.81;
  const MotorThrusts u = InvertAllocation(w, p);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(u(i), p.HoverThrustPerMotor(), 1e-14);
}

TEST(Quaternion, RotationMatrixIsOrthonormalAndMatchesConjugation) {
  std::mt19937 rng(5);
  for (int k = 0; k < 50; ++k) {
    const Quat q = RandomQuat(rng);
    const Mat3 r = RotationMatrix(q);
    EXPECT_LE((r * r.transpose() - Mat3::Identity()).norm(), 1e-14);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-14);
    const Vec3 v = RandomVec(rng);
    const Quat rotated = QuatMultiply(QuatMultiply(q, Quat(0, v(0), v(1), v(2))), QuatConjugate(q));
    EXPECT_LE((rotated.tail<3>() - r * v).norm(), 1e-14);
    EXPECT_LE((BodyZ(q) - r.col(2)).norm(), 1e-14);
    const Quat back = QuatFromRotation(r);
    EXPECT_LE(std::min((back - q).norm(), (back + q).norm()), 1e-12);
  }
}

TEST(Quaternion, BodyZJacobianMatchesFiniteDifference) {
  std::mt19937 rng(8);
  const Quat q = RandomQuat(rng) * 1.3;
  const auto jac = BodyZJacobian(q);
  for (int j = 0; j < 4; ++j) {
    Quat qp = q, qm = q;
    qp(j) += 1e-6;
    qm(j) -= 1e-6;
    EXPECT_LE(((BodyZ(qp) - BodyZ(qm)) / 2e-6 - jac.col(j)).norm(), 1e-8);
  }
}

TEST(Quaternion, ExpLogRoundTrip) {
  std::mt19937 rng(9);
  for (int k = 0; k < 50; ++k) {
    const Vec3 v = RandomVec(rng, 1.5);
    EXPECT_LE((QuatLog(QuatExp(v)) - v).norm(), 1e-12);
  }
  EXPECT_LE(QuatLog(Quat(1, 0, 0, 0)).norm(), 0.0);
}

TEST(Quaternion, OmegaMatrixIsRightMultiplicationByRate) {
  std::mt19937 rng(10);
  const Quat q = RandomQuat(rng);
  const Vec3 w = RandomVec(rng, 3.0);
  EXPECT_LE((OmegaMatrix(w) * q - QuatMultiply(q, Quat(0, w(0), w(1), w(2)))).norm(), 1e-14);
}

TEST(Quaternion, EulerStepPreservesUnitNorm) {
  std::mt19937 rng(12);
  for (int k = 0; k < 20; ++k) {
    const Quat q = RandomQuat(rng);
    EXPECT_NEAR(QuatEulerStep(q, RandomVec(rng, 10.0), 0.3).norm(), 1.0, 1e-14);
  }
}

TEST(Flatness, HoverGivesIdentityAndEqualThrusts) {
  const QuadParams p = QuadParams::CrazyFlie();
  FlatOutput f;
  f.position = Vec3(1, 2, 3);
  const FlatState s = FlatToState(f, p);
  EXPECT_LE((s.state.attitude - Quat(1, 0, 0, 0)).norm(), 1e-15);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(s.thrusts(i), 0.07848, 1e-12);
  EXPECT_LE(s.state.body_rate.norm(), 0.0);
}

TEST(Flatness, HorizontalAccelerationTiltsTowardMotion) {
  const QuadParams p = QuadParams::CrazyFlie();
  FlatOutput f;
  f.acceleration = Vec3(1, 0, 0);
  const FlatState s = FlatToState(f, p);
  const Vec3 z = RotationMatrix(s.state.attitude).col(2);
  EXPECT_GT(z(0), 0.0);
  const Vec3 acc = z * s.collective_thrust / p.mass + p.gravity;
  EXPECT_LE((acc - f.acceleration).norm(), 1e-9);
  EXPECT_NEAR(AllocateWrench(s.thrusts, p).thrust, s.collective_thrust, 1e-15);
}

TEST(Flatness, FreeFallIsSingular) {
  const QuadParams p = QuadParams::CrazyFlie();
  FlatOutput f;
  f.acceleration = p.gravity;
  EXPECT_THROW(FlatToState(f, p), SingularityError);
}

// Smooth test trajectory with analytic derivatives up to snap.
FlatOutput Lissajous(double t) {
  FlatOutput f;
  const double a = 1.3, b = 0.7, c = 0.4;
  f.position = Vec3(std::sin(a * t), std::cos(b * t), c * std::sin(t));
  f.velocity = Vec3(a * std::cos(a * t), -b * std::sin(b * t), c * std::cos(t));
  f.acceleration = Vec3(-a * a * std::sin(a * t), -b * b * std::cos(b * t), -c * std::sin(t));
  f.jerk = Vec3(-a * a * a * std::cos(a * t), b * b * b * std::sin(b * t), -c * std::cos(t));
  f.snap = Vec3(a * a * a * a * std::sin(a * t), b * b * b * b * std::cos(b * t), c * std::sin(t));
  f.yaw = 0.3 * std::sin(0.5 * t);
  f.yaw_rate = 0.15 * std::cos(0.5 * t);
  f.yaw_acceleration = -0.075 * std::sin(0.5 * t);
  return f;
}

TEST(Flatness, StatesSatisfyDynamicsAlongSmoothTrajectory) {
  const QuadParams p = QuadParams::CrazyFlie();
  for (double t = 0.0; t < 6.0; t += 0.37) {
    const FlatOutput f = Lissajous(t);
    const FlatState s = FlatToState(f, p);
    EXPECT_NEAR(s.state.attitude.norm(), 1.0, 1e-12);
    const auto d = DynamicsRhs(s.state, s.thrusts, p);
    EXPECT_LE((d.velocity_dot - f.acceleration).norm(), 1e-9) << t;
    EXPECT_LE((d.body_rate_dot - s.body_acceleration).norm(), 1e-9) << t;
    // Heading: the yaw direction lies in the body x-z plane, ahead of the vehicle.
    const Mat3 r = RotationMatrix(s.state.attitude);
    const Vec3 xc(std::cos(f.yaw), std::sin(f.yaw), 0.0);
    EXPECT_NEAR(r.col(1).dot(xc), 0.0, 1e-12);
    EXPECT_GT(r.col(0).dot(xc), 0.0);
  }
}

TEST(Flatness, NumericalDifferentiationReproducesRatesToFirstOrder) {
  const QuadParams p = QuadParams::CrazyFlie();
  for (double t : {0.2, 1.1, 2.9, 4.4}) {
    const FlatState s0 = FlatToState(Lissajous(t), p);
    double prev = 1e300;
    for (double dt : {1e-2, 1e-3, 1e-4}) {
      const FlatState s1 = FlatToState(Lissajous(t + dt), p);
      const Quat qdot = (s1.state.attitude - s0.state.attitude) / dt;
      const Vec3 w_num = 2.0 * QuatMultiply(QuatConjugate(s0.state.attitude), qdot).tail<3>();
      const Vec3 wdot_num = (s1.state.body_rate - s0.state.body_rate) / dt;
      const Vec3 v_num = (s1.state.position - s0.state.position) / dt;
      const double err = std::max({(w_num - s0.state.body_rate).norm(),
                                   (wdot_num - s0.body_acceleration).norm(),
                                   (v_num - s0.state.velocity).norm()});
      EXPECT_LE(err, 200.0 * dt) << "t " << t << " dt " << dt;
      EXPECT_LT(err, prev);
      prev = err;
    }
  }
}

}  // namespace
}  // namespace toppquad
