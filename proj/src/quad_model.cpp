#include "toppquad/quad_model.hpp"

#include <cmath>
#include <string>

#include "toppquad/errors.hpp"

namespace toppquad {

QuadParams QuadParams::Make(double mass, const Mat3& inertia, const Mat4& allocation,
                            const Vec4& u_min, const Vec4& u_max, const Vec3& gravity) {
  if (!(mass > 0.0)) throw ConfigError("mass must be positive");
  if ((inertia - inertia.transpose()).cwiseAbs().maxCoeff() >
      1e-12 * inertia.cwiseAbs().maxCoeff()) {
    throw ConfigError("inertia must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(inertia);
  if (eig.eigenvalues().minCoeff() <= 0.0) {
    throw ConfigError("inertia must be positive definite");
  }
  Eigen::JacobiSVD<Mat4> svd(allocation);
  const double smax = svd.singularValues()(0);
  const double smin = svd.singularValues()(3);
  if (!(smin > 1e-12 * smax) || !std::isfinite(smax / smin)) {
    throw ConfigError("allocation matrix is singular");
  }
  for (int i = 0; i < 4; ++i) {
    if (!(u_min(i) < u_max(i))) {
      throw ConfigError("motor " + std::to_string(i + 1) + ": u_min must be < u_max");
    }
  }
  QuadParams p;
  p.mass = mass;
  p.inertia = 0.5 * (inertia + inertia.transpose());
  p.allocation = allocation;
  p.u_min = u_min;
  p.u_max = u_max;
  p.gravity = gravity;
  p.allocation_inverse = allocation.inverse();
  p.inertia_inverse = p.inertia.inverse();
  return p;
}

Mat4 XConfigAllocation(double arm, double kappa) {
  Mat4 f;
  f << 1.0, 1.0, 1.0, 1.0,
      -arm, -arm, arm, arm,
      -arm, arm, arm, -arm,
      -kappa, kappa, -kappa, kappa;
  return f;
}

QuadParams QuadParams::CrazyFlie() {
  // 46 mm motor arm at 45 degrees; drag/thrust ratio 0.006 m.
  const double arm = 0.046 / std::sqrt(2.0);
  Mat3 inertia = Vec3(1.66e-5, 1.66e-5, 2.93e-5).asDiagonal();
  return Make(0.032, inertia, XConfigAllocation(arm, 0.006), Vec4::Zero(),
              Vec4::Constant(0.14375));
}

QuadParams QuadParams::Bidirectional() const {
  return Make(mass, inertia, allocation, -u_max, u_max, gravity);
}

double QuadParams::HoverThrustPerMotor() const {
  return mass * gravity.norm() / 4.0;
}

Mat3 Skew(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),
      w.z(), 0.0, -w.x(),
      -w.y(), w.x(), 0.0;
  return m;
}

Vec3 Vee(const Mat3& m) { return Vec3(m(2, 1), m(0, 2), m(1, 0)); }

Mat4 OmegaMatrix(const Vec3& w) {
  Mat4 m;
  m(0, 0) = 0.0;
  m.block<1, 3>(0, 1) = -w.transpose();
  m.block<3, 1>(1, 0) = w;
  m.block<3, 3>(1, 1) = -Skew(w);
  return m;
}

Quat QuatMultiply(const Quat& a, const Quat& b) {
  const Vec3 av = a.tail<3>();
  const Vec3 bv = b.tail<3>();
  Quat r;
  r(0) = a(0) * b(0) - av.dot(bv);
  r.tail<3>() = a(0) * bv + b(0) * av + av.cross(bv);
  return r;
}

Quat QuatConjugate(const Quat& q) { return Quat(q(0), -q(1), -q(2), -q(3)); }

Quat QuatExp(const Vec3& v) {
  const double angle = v.norm();
  Quat q;
  if (angle < 1e-8) {
    // second-order series keeps unit norm to machine precision
    q(0) = 1.0 - angle * angle / 8.0;
    q.tail<3>() = 0.5 * v * (1.0 - angle * angle / 24.0);
    return q.normalized();
  }
  q(0) = std::cos(0.5 * angle);
  q.tail<3>() = std::sin(0.5 * angle) / angle * v;
  return q;
}

Vec3 QuatLog(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q(0) < 0.0) q = -q;
  const double vn = q.tail<3>().norm();
  if (vn < 1e-12) return 2.0 * q.tail<3>();
  const double angle = 2.0 * std::atan2(vn, q(0));
  return angle / vn * q.tail<3>();
}

Quat QuatFromRotation(const Mat3& r) {
  Eigen::Quaterniond e(r);
  e.normalize();
  Quat q(e.w(), e.x(), e.y(), e.z());
  if (q(0) < 0.0) q = -q;
  return q;
}

Mat3 RotationMatrix(const Quat& q) {
  const double w = q(0), x = q(1), y = q(2), z = q(3);
  Mat3 r;
  r << w * w + x * x - y * y - z * z, 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
      2.0 * (x * y + w * z), w * w - x * x + y * y - z * z, 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x), w * w - x * x - y * y + z * z;
  return r;
}

Vec3 BodyZ(const Quat& q) {
  const double w = q(0), x = q(1), y = q(2), z = q(3);
  return Vec3(2.0 * (x * z + w * y), 2.0 * (y * z - w * x), w * w - x * x - y * y + z * z);
}

Eigen::Matrix<double, 3, 4> BodyZJacobian(const Quat& q) {
  const double w = q(0), x = q(1), y = q(2), z = q(3);
  Eigen::Matrix<double, 3, 4> j;
  j << 2.0 * y, 2.0 * z, 2.0 * w, 2.0 * x,
      -2.0 * x, -2.0 * w, 2.0 * z, 2.0 * y,
      2.0 * w, -2.0 * x, -2.0 * y, 2.0 * z;
  return j;
}

Quat QuatEulerStep(const Quat& q, const Vec3& w, double step) {
  const double nu = std::sqrt(1.0 + 0.25 * step * step * w.squaredNorm());
  return (q + 0.5 * step * OmegaMatrix(w) * q) / nu;
}

StateDerivative DynamicsRhs(const RigidState& s, const MotorThrusts& u,
                            const QuadParams& params) {
  const Wrench wrench = AllocateWrench(u, params);
  StateDerivative d;
  d.position_dot = s.velocity;
  d.velocity_dot = BodyZ(s.attitude) * (wrench.thrust / params.mass) + params.gravity;
  d.attitude_dot = 0.5 * OmegaMatrix(s.body_rate) * s.attitude;
  d.body_rate_dot = params.inertia_inverse *
                    (wrench.torque - s.body_rate.cross(params.inertia * s.body_rate));
  return d;
}

Wrench AllocateWrench(const MotorThrusts& u, const QuadParams& params) {
  const Vec4 ct = params.allocation * u;
  return Wrench{ct(0), ct.tail<3>()};
}

MotorThrusts InvertAllocation(const Wrench& wrench, const QuadParams& params) {
  Vec4 ct;
  ct(0) = wrench.thrust;
  ct.tail<3>() = wrench.torque;
  // One refinement step brings the round trip to the 1e-15 level even for
  // the badly scaled CrazyFlie matrix (torque rows ~1e-2).
  Vec4 u = params.allocation_inverse * ct;
  u += params.allocation_inverse * (ct - params.allocation * u);
  return u;
}

namespace {

struct UnitDerivs {
  Vec3 u, du, ddu;
};

// Unit vector u = v/|v| and its first two time derivatives.
UnitDerivs Normalize(const Vec3& v, const Vec3& dv, const Vec3& ddv) {
  const double r = v.norm();
  UnitDerivs out;
  out.u = v / r;
  const double dr = out.u.dot(dv);
  out.du = (dv - out.u * dr) / r;
  const double ddr = out.du.dot(dv) + out.u.dot(ddv);
  out.ddu = (ddv - 2.0 * out.du * dr - out.u * ddr) / r;
  return out;
}

}  // namespace

FlatState FlatToState(const FlatOutput& flat, const QuadParams& params) {
  const Vec3 t = flat.acceleration - params.gravity;
  const double tn = t.norm();
  if (!(tn > 1e-9 * params.gravity.norm())) {
    throw SingularityError("flatness map: required thrust vanishes (free fall)");
  }
  const UnitDerivs zb = Normalize(t, flat.jerk, flat.snap);

  const double cy = std::cos(flat.yaw), sy = std::sin(flat.yaw);
  const Vec3 xc(cy, sy, 0.0);
  const Vec3 dxc = flat.yaw_rate * Vec3(-sy, cy, 0.0);
  const Vec3 ddxc = flat.yaw_acceleration * Vec3(-sy, cy, 0.0) -
                    flat.yaw_rate * flat.yaw_rate * Vec3(cy, sy, 0.0);

  const Vec3 n = zb.u.cross(xc);
  if (n.norm() < 1e-9) {
    throw SingularityError("flatness map: body z parallel to heading direction");
  }
  const Vec3 dn = zb.du.cross(xc) + zb.u.cross(dxc);
  const Vec3 ddn = zb.ddu.cross(xc) + 2.0 * zb.du.cross(dxc) + zb.u.cross(ddxc);
  const UnitDerivs yb = Normalize(n, dn, ddn);

  const Vec3 xb = yb.u.cross(zb.u);
  const Vec3 dxb = yb.du.cross(zb.u) + yb.u.cross(zb.du);
  const Vec3 ddxb = yb.ddu.cross(zb.u) + 2.0 * yb.du.cross(zb.du) + yb.u.cross(zb.ddu);

  Mat3 r;
  r.col(0) = xb;
  r.col(1) = yb.u;
  r.col(2) = zb.u;

  // w^ = R^T dR/dt, read off column by column.
  const Vec3 w(zb.u.dot(yb.du), xb.dot(zb.du), yb.u.dot(dxb));
  const Vec3 dw(zb.du.dot(yb.du) + zb.u.dot(yb.ddu), dxb.dot(zb.du) + xb.dot(zb.ddu),
                yb.du.dot(dxb) + yb.u.dot(ddxb));

  FlatState out;
  out.state.position = flat.position;
  out.state.velocity = flat.velocity;
  out.state.attitude = QuatFromRotation(r);
  out.state.body_rate = w;
  out.body_acceleration = dw;
  out.collective_thrust = params.mass * tn;
  Wrench wrench;
  wrench.thrust = out.collective_thrust;
  wrench.torque = params.inertia * dw + w.cross(params.inertia * w);
  out.thrusts = InvertAllocation(wrench, params);
  return out;
}

namespace {

RigidState Advance(const RigidState& s, const StateDerivative& d, double dt) {
  RigidState out;
  out.position = s.position + dt * d.position_dot;
  out.velocity = s.velocity + dt * d.velocity_dot;
  out.attitude = s.attitude + dt * d.attitude_dot;
  out.body_rate = s.body_rate + dt * d.body_rate_dot;
  return out;
}

}  // namespace

RigidState Rk4Step(const RigidState& s, const MotorThrusts& u, const QuadParams& params,
                   double dt) {
  const StateDerivative k1 = DynamicsRhs(s, u, params);
  const StateDerivative k2 = DynamicsRhs(Advance(s, k1, 0.5 * dt), u, params);
  const StateDerivative k3 = DynamicsRhs(Advance(s, k2, 0.5 * dt), u, params);
  const StateDerivative k4 = DynamicsRhs(Advance(s, k3, dt), u, params);
  RigidState out;
  out.position = s.position + dt / 6.0 *
                                  (k1.position_dot + 2.0 * k2.position_dot +
                                   2.0 * k3.position_dot + k4.position_dot);
  out.velocity = s.velocity + dt / 6.0 *
                                  (k1.velocity_dot + 2.0 * k2.velocity_dot +
                                   2.0 * k3.velocity_dot + k4.velocity_dot);
  out.attitude = s.attitude + dt / 6.0 *
                                  (k1.attitude_dot + 2.0 * k2.attitude_dot +
                                   2.0 * k3.attitude_dot + k4.attitude_dot);
  out.body_rate = s.body_rate + dt / 6.0 *
                                    (k1.body_rate_dot + 2.0 * k2.body_rate_dot +
                                     2.0 * k3.body_rate_dot + k4.body_rate_dot);
  return out;
}

}  // namespace toppquad
