#pragma once

#include <Eigen/Dense>
#include <utility>

namespace toppquad {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Quaternions are stored scalar-first (w, x, y, z), Hamilton product,
// rotating body-frame vectors into the world frame.
using Quat = Eigen::Vector4d;

// Physical parameters of the vehicle. Use QuadParams::Make (or the config
// loader) to get a validated instance; the allocation inverse is cached there.
struct QuadParams {
  double mass = 0.032;
  Mat3 inertia = Mat3::Zero();
  // Rows: collective thrust c, then body torques tau_x, tau_y, tau_z.
  Mat4 allocation = Mat4::Zero();
  Vec4 u_min = Vec4::Zero();
  Vec4 u_max = Vec4::Zero();
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);

  Mat4 allocation_inverse = Mat4::Zero();
  Mat3 inertia_inverse = Mat3::Zero();

  // Validates the invariants and fills the cached inverses. Throws
  // ConfigError when mass <= 0, inertia is not SPD, the allocation matrix is
  // singular, or a thrust bound pair is not strictly ordered.
  static QuadParams Make(double mass, const Mat3& inertia, const Mat4& allocation,
                         const Vec4& u_min, const Vec4& u_max,
                         const Vec3& gravity = Vec3(0.0, 0.0, -9.81));

  // CrazyFlie 2.0 class vehicle: 32 g, thrust in [0, 0.14375] N per motor.
  // Arm length, drag coefficient and inertia are representative values.
  static QuadParams CrazyFlie();

  // Same vehicle with motor bounds sign-extended to [-u_max, u_max].
  QuadParams Bidirectional() const;

  double HoverThrustPerMotor() const;
};

// X-configuration allocation: rows (1,1,1,1), roll arm +-arm, pitch arm
// +-arm, yaw drag +-kappa.
Mat4 XConfigAllocation(double arm, double kappa);

struct RigidState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Quat attitude = Quat(1.0, 0.0, 0.0, 0.0);
  Vec3 body_rate = Vec3::Zero();
};

struct StateDerivative {
  Vec3 position_dot = Vec3::Zero();
  Vec3 velocity_dot = Vec3::Zero();
  Quat attitude_dot = Quat::Zero();
  Vec3 body_rate_dot = Vec3::Zero();
};

using MotorThrusts = Vec4;

struct Wrench {
  double thrust = 0.0;
  Vec3 torque = Vec3::Zero();
};

Mat3 Skew(const Vec3& w);
Vec3 Vee(const Mat3& m);

// The 4x4 matrix with q' = 0.5 * Omega(w) q for body rate w.
Mat4 OmegaMatrix(const Vec3& w);

Quat QuatMultiply(const Quat& a, const Quat& b);
Quat QuatConjugate(const Quat& q);
Quat QuatExp(const Vec3& rotation_vector);
Vec3 QuatLog(const Quat& q);
Quat QuatFromRotation(const Mat3& r);

// Rotation matrix of q, using the degree-2 homogeneous form so that
// R(k q) = k^2 R(q). Exact for unit q.
Mat3 RotationMatrix(const Quat& q);

// Third column R(q) e3 (homogeneous form) and its 3x4 Jacobian in q.
Vec3 BodyZ(const Quat& q);
Eigen::Matrix<double, 3, 4> BodyZJacobian(const Quat& q);

// One normalized forward-Euler step of the quaternion kinematics:
// (I + step/2 Omega(w)) q / sqrt(1 + step^2/4 |w|^2).
Quat QuatEulerStep(const Quat& q, const Vec3& w, double step);

StateDerivative DynamicsRhs(const RigidState& state, const MotorThrusts& u,
                            const QuadParams& params);

Wrench AllocateWrench(const MotorThrusts& u, const QuadParams& params);
MotorThrusts InvertAllocation(const Wrench& wrench, const QuadParams& params);

// Position derivatives up to snap plus yaw and its first two derivatives.
struct FlatOutput {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
  Vec3 jerk = Vec3::Zero();
  Vec3 snap = Vec3::Zero();
  double yaw = 0.0;
  double yaw_rate = 0.0;
  double yaw_acceleration = 0.0;
};

struct FlatState {
  RigidState state;
  Vec3 body_acceleration = Vec3::Zero();  // angular acceleration, body frame
  MotorThrusts thrusts = MotorThrusts::Zero();
  double collective_thrust = 0.0;
};

// Differential-flatness map. Body z is aligned with m(a - g); the heading
// comes from the projected frame x_c = (cos yaw, sin yaw, 0). Body rates and
// angular accelerations are exact derivatives of that attitude. Throws
// SingularityError in free fall or when body z is parallel to x_c.
FlatState FlatToState(const FlatOutput& flat, const QuadParams& params);

// One classical RK4 step with constant thrusts. The attitude is not
// renormalized; callers that integrate for long horizons should do so.
RigidState Rk4Step(const RigidState& state, const MotorThrusts& u,
                   const QuadParams& params, double dt);

}  // namespace toppquad
