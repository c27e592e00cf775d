#include "toppquad/timed_trajectory.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "toppquad/errors.hpp"
#include "toppquad/reparam.hpp"

namespace toppquad {

namespace {

const char* const kColumns[] = {"t",  "x",  "y",  "z",  "vx", "vy", "vz", "ax", "ay", "az", "qw",
                                "qx", "qy", "qz", "wx", "wy", "wz", "u1", "u2", "u3", "u4"};
constexpr int kNumColumns = 21;

// Coefficients of the quintic in tau matching (p, v, a) at tau = 0 and T.
std::array<Vec3, 6> QuinticCoefficients(const Vec3& p0, const Vec3& v0, const Vec3& a0,
                                        const Vec3& p1, const Vec3& v1, const Vec3& a1, double T) {
  const Vec3 d = p1 - p0;
  const double T2 = T * T, T3 = T2 * T;
  return {p0,
          v0,
          0.5 * a0,
          (20.0 * d - (8.0 * v1 + 12.0 * v0) * T - (3.0 * a0 - a1) * T2) / (2.0 * T3),
          (-30.0 * d + (14.0 * v1 + 16.0 * v0) * T + (3.0 * a0 - 2.0 * a1) * T2) / (2.0 * T3 * T),
          (12.0 * d - 6.0 * (v1 + v0) * T - (a0 - a1) * T2) / (2.0 * T3 * T2)};
}

Vec3 PolyDerivative(const std::array<Vec3, 6>& c, double tau, int k) {
  Vec3 out = Vec3::Zero();
  for (int j = 5; j >= k; --j) {
    double f = 1.0;
    for (int m = 0; m < k; ++m) f *= j - m;
    out = out * tau + f * c[j];
  }
  return out;
}

double HeadingOf(const Quat& q) {
  const Mat3 r = RotationMatrix(q);
  return std::atan2(r(1, 0), r(0, 0));
}

void Fnv(uint64_t& h, double x) {
  unsigned char b[sizeof(double)];
  std::memcpy(b, &x, sizeof(double));
  for (unsigned char c : b) {
    h ^= c;
    h *= 1099511628211ULL;
  }
}

std::vector<double> SampleTimes(double total, double dt) {
  if (!(dt > 0.0)) throw ConfigError("sampling period must be positive");
  std::vector<double> t;
  const long k_max = static_cast<long>(std::floor(total / dt + 1e-9));
  for (long k = 0; k <= k_max; ++k) t.push_back(std::min(total, k * dt));
  if (total - t.back() > 1e-12 * std::max(1.0, total)) t.push_back(total);
  return t;
}

std::string Fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

void TimedTrajectory::Validate() const {
  const size_t n = t.size();
  auto ok = [n](size_t m) { return m == n; };
  if (!ok(position.size()) || !ok(velocity.size()) || !ok(acceleration.size()) ||
      !ok(attitude.size()) || !ok(body_rate.size()) || !ok(thrust.size()) ||
      !(s.empty() || ok(s.size())) || !(jerk.empty() || ok(jerk.size()))) {
    throw ConfigError("trajectory arrays have mismatched lengths");
  }
  for (size_t i = 1; i < n; ++i) {
    if (!(t[i] > t[i - 1])) throw ConfigError("sample times must increase strictly");
  }
  for (size_t i = 0; i < n; ++i) {
    if (std::abs(attitude[i].norm() - 1.0) > 1e-9) {
      throw ConfigError("attitude at sample " + std::to_string(i) + " is not a unit quaternion");
    }
  }
}

std::string ParamsHash(const QuadParams& p) {
  uint64_t h = 14695981039346656037ULL;
  Fnv(h, p.mass);
  for (int i = 0; i < 9; ++i) Fnv(h, p.inertia(i));
  for (int i = 0; i < 16; ++i) Fnv(h, p.allocation(i));
  for (int i = 0; i < 4; ++i) Fnv(h, p.u_min(i));
  for (int i = 0; i < 4; ++i) Fnv(h, p.u_max(i));
  for (int i = 0; i < 3; ++i) Fnv(h, p.gravity(i));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

SolutionInterpolant::SolutionInterpolant(const ToppSolution& sol, const GeometricPath* path)
    : path_(path) {
  const PathGrid& g = sol.grid;
  const int nodes = g.nodes();
  sol.state.CheckSize(nodes);
  ds_ = g.ds;
  s_ = g.s;
  h_ = sol.state.speed.h;
  for (double& x : h_) x = std::max(0.0, x);
  node_times_ = TimeMap(h_, ds_);
  q_ = sol.state.rotation.q;
  for (Quat& q : q_) q.normalize();
  MakeSignContinuous(q_);
  u_ = sol.state.u;
  for (int i = 0; i < nodes; ++i) {
    // Central slope at interior nodes keeps (v, a) consistent across an
    // interval to second order; the solver's forward slope is not.
    const int lo = std::max(i - 1, 0), hi = std::min(i + 1, nodes - 1);
    const double r = std::sqrt(h_[i]), hp = (h_[hi] - h_[lo]) / (g.s[hi] - g.s[lo]);
    p_.push_back(g.gamma[i]);
    v_.push_back(r * g.d1[i]);
    a_.push_back(0.5 * hp * g.d1[i] + h_[i] * g.d2[i]);
    w_.push_back(r * sol.state.rotation.w[i]);
  }
}

int SolutionInterpolant::Interval(double t) const {
  const int n = static_cast<int>(node_times_.size()) - 1;
  const auto it = std::upper_bound(node_times_.begin() + 1, node_times_.end() - 1, t);
  return std::clamp(static_cast<int>(it - node_times_.begin()) - 1, 0, n - 1);
}

double SolutionInterpolant::PathParameter(double t) const {
  t = std::clamp(t, 0.0, duration());
  const int i = Interval(t);
  const double tau = t - node_times_[i];
  const double slope = (h_[i + 1] - h_[i]) / ds_;
  const double sigma = std::sqrt(h_[i]) * tau + 0.25 * slope * tau * tau;
  return std::clamp(s_[i] + sigma, s_[i], s_[i + 1]);
}

FlatOutput SolutionInterpolant::Evaluate(double t) const {
  t = std::clamp(t, 0.0, duration());
  const int i = Interval(t);
  const double T = node_times_[i + 1] - node_times_[i];
  const double tau = t - node_times_[i];
  const auto c = QuinticCoefficients(p_[i], v_[i], a_[i], p_[i + 1], v_[i + 1], a_[i + 1], T);
  FlatOutput f;
  f.position = PolyDerivative(c, tau, 0);
  f.velocity = PolyDerivative(c, tau, 1);
  f.acceleration = PolyDerivative(c, tau, 2);
  f.jerk = PolyDerivative(c, tau, 3);
  f.snap = PolyDerivative(c, tau, 4);
  if (path_) {
    const double slope = (h_[i + 1] - h_[i]) / ds_;
    const double sd = std::sqrt(h_[i]) + 0.5 * slope * tau;
    const double s = PathParameter(t);
    f.yaw = path_->Yaw(s, 0);
    f.yaw_rate = path_->Yaw(s, 1) * sd;
    f.yaw_acceleration = path_->Yaw(s, 2) * sd * sd + path_->Yaw(s, 1) * 0.5 * slope;
  } else {
    Quat q;
    Vec3 w;
    Attitude(t, q, w);
    f.yaw = HeadingOf(q);
  }
  return f;
}

void SolutionInterpolant::Attitude(double t, Quat& q, Vec3& body_rate) const {
  t = std::clamp(t, 0.0, duration());
  const int i = Interval(t);
  const double T = node_times_[i + 1] - node_times_[i];
  const double x = (t - node_times_[i]) / T;
  const Quat& q0 = q_[i];
  const Quat& q3 = q_[i + 1];
  const Vec3 w1 = w_[i] * T / 3.0, w3 = w_[i + 1] * T / 3.0;
  const Quat q1 = QuatMultiply(q0, QuatExp(w1));
  const Quat q2 = QuatMultiply(q3, QuatExp(-w3));
  const Vec3 w2 = QuatLog(QuatMultiply(QuatConjugate(q1), q2));
  const double b1 = 1.0 - std::pow(1.0 - x, 3), b2 = 3.0 * x * x - 2.0 * x * x * x, b3 = x * x * x;
  const double d1 = 3.0 * (1.0 - x) * (1.0 - x), d2 = 6.0 * x * (1.0 - x), d3 = 3.0 * x * x;
  const Quat e2 = QuatExp(w2 * b2), e3 = QuatExp(w3 * b3);
  q = QuatMultiply(QuatMultiply(QuatMultiply(q0, QuatExp(w1 * b1)), e2), e3);
  q.normalize();
  const Mat3 r2t = RotationMatrix(e2).transpose(), r3t = RotationMatrix(e3).transpose();
  body_rate = (r3t * (r2t * (w1 * d1) + w2 * d2) + w3 * d3) / T;
}

MotorThrusts SolutionInterpolant::Thrust(double t) const {
  t = std::clamp(t, 0.0, duration());
  const int i = Interval(t);
  const double x = (t - node_times_[i]) / (node_times_[i + 1] - node_times_[i]);
  return (1.0 - x) * u_[i] + x * u_[i + 1];
}

TimedTrajectory SampleSolution(const ToppSolution& sol, const QuadParams& params, double dt,
                               const GeometricPath* path, std::vector<std::string>* warnings) {
  const SolutionInterpolant interp(sol, path);
  const auto& nt = interp.node_times();
  double shortest = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i + 1 < nt.size(); ++i) shortest = std::min(shortest, nt[i + 1] - nt[i]);
  if (warnings && dt > shortest) {
    warnings->push_back("sampling period " + Fmt(dt) + " s exceeds the shortest node interval " +
                        Fmt(shortest) + " s");
  }
  TimedTrajectory out;
  out.metadata = {"toppquad", ParamsHash(params)};
  out.t = SampleTimes(interp.duration(), dt);
  for (double t : out.t) {
    const FlatOutput f = interp.Evaluate(t);
    Quat q;
    Vec3 w;
    interp.Attitude(t, q, w);
    out.s.push_back(interp.PathParameter(t));
    out.position.push_back(f.position);
    out.velocity.push_back(f.velocity);
    out.acceleration.push_back(f.acceleration);
    out.jerk.push_back(f.jerk);
    out.attitude.push_back(q);
    out.body_rate.push_back(w);
    out.thrust.push_back(interp.Thrust(t));
  }
  return out;
}

TimedTrajectory SampleFlat(const FlatTrajectory& traj, const QuadParams& params, double dt,
                           const std::string& source) {
  TimedTrajectory out;
  out.metadata = {source, ParamsHash(params)};
  out.t = SampleTimes(traj.duration(), dt);
  for (double t : out.t) {
    const FlatOutput f = traj.Evaluate(t);
    FlatState fs;
    try {
      fs = FlatToState(f, params);
    } catch (const SingularityError& e) {
      throw SingularityError("sample at t = " + Fmt(t) + ": " + e.what());
    }
    out.position.push_back(f.position);
    out.velocity.push_back(f.velocity);
    out.acceleration.push_back(f.acceleration);
    out.jerk.push_back(f.jerk);
    out.attitude.push_back(fs.state.attitude);
    out.body_rate.push_back(fs.state.body_rate);
    out.thrust.push_back(fs.thrusts);
  }
  MakeSignContinuous(out.attitude);
  return out;
}

TrajectoryFormat ParseTrajectoryFormat(const std::string& name) {
  if (name == "csv") return TrajectoryFormat::kCsv;
  if (name == "json") return TrajectoryFormat::kJson;
  throw ConfigError("unknown trajectory format '" + name + "' (expected csv or json)");
}

namespace {

std::array<double, kNumColumns> Row(const TimedTrajectory& tr, int i) {
  std::array<double, kNumColumns> r{};
  r[0] = tr.t[i];
  for (int k = 0; k < 3; ++k) {
    r[1 + k] = tr.position[i](k);
    r[4 + k] = tr.velocity[i](k);
    r[7 + k] = tr.acceleration[i](k);
    r[14 + k] = tr.body_rate[i](k);
  }
  for (int k = 0; k < 4; ++k) {
    r[10 + k] = tr.attitude[i](k);
    r[17 + k] = tr.thrust[i](k);
  }
  return r;
}

void AppendRow(TimedTrajectory& tr, const std::array<double, kNumColumns>& r) {
  tr.t.push_back(r[0]);
  tr.position.emplace_back(r[1], r[2], r[3]);
  tr.velocity.emplace_back(r[4], r[5], r[6]);
  tr.acceleration.emplace_back(r[7], r[8], r[9]);
  tr.attitude.emplace_back(r[10], r[11], r[12], r[13]);
  tr.body_rate.emplace_back(r[14], r[15], r[16]);
  tr.thrust.emplace_back(r[17], r[18], r[19], r[20]);
}

std::string Header() {
  std::string h;
  for (int k = 0; k < kNumColumns; ++k) h += (k ? "," : "") + std::string(kColumns[k]);
  return h;
}

}  // namespace

void ExportTrajectory(const TimedTrajectory& traj, const std::string& file,
                      TrajectoryFormat format) {
  traj.Validate();
  std::ofstream out(file);
  if (!out) throw IoError("cannot open " + file + " for writing");
  if (format == TrajectoryFormat::kCsv) {
    out << Header() << '\n';
    for (int i = 0; i < traj.size(); ++i) {
      const auto r = Row(traj, i);
      for (int k = 0; k < kNumColumns; ++k) out << (k ? "," : "") << Fmt(r[k]);
      out << '\n';
    }
  } else {
    nlohmann::json j;
    j["metadata"] = {{"source", traj.metadata.source}, {"params_hash", traj.metadata.params_hash}};
    j["columns"] = nlohmann::json::array();
    for (const char* c : kColumns) j["columns"].push_back(c);
    j["rows"] = nlohmann::json::array();
    for (int i = 0; i < traj.size(); ++i) j["rows"].push_back(Row(traj, i));
    j["s"] = traj.s;
    auto jerk = nlohmann::json::array();
    for (const Vec3& v : traj.jerk) jerk.push_back({v(0), v(1), v(2)});
    j["jerk"] = jerk;
    out << j.dump(1) << '\n';
  }
  if (!out) throw IoError("failed writing " + file);
}

TimedTrajectory ImportTrajectory(const std::string& file, TrajectoryFormat format) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file);
  TimedTrajectory tr;
  if (format == TrajectoryFormat::kCsv) {
    std::string line;
    if (!std::getline(in, line) || line != Header()) {
      throw IoError(file + ": missing or unexpected header");
    }
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::array<double, kNumColumns> r{};
      const char* p = line.c_str();
      for (int k = 0; k < kNumColumns; ++k) {
        char* end = nullptr;
        r[k] = std::strtod(p, &end);
        if (end == p || (k + 1 < kNumColumns && *end != ',') || (k + 1 == kNumColumns && *end)) {
          throw IoError(file + ":" + std::to_string(lineno) + ": malformed row");
        }
        p = end + 1;
      }
      AppendRow(tr, r);
    }
  } else {
    nlohmann::json j;
    try {
      in >> j;
      tr.metadata.source = j.at("metadata").at("source").get<std::string>();
      tr.metadata.params_hash = j.at("metadata").at("params_hash").get<std::string>();
      for (const auto& row : j.at("rows")) AppendRow(tr, row.get<std::array<double, kNumColumns>>());
      tr.s = j.at("s").get<std::vector<double>>();
      for (const auto& v : j.at("jerk")) tr.jerk.emplace_back(v.at(0), v.at(1), v.at(2));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(file + ": " + e.what());
    }
  }
  try {
    tr.Validate();
  } catch (const ConfigError& e) {
    throw IoError(file + ": " + e.what());
  }
  return tr;
}

}  // namespace toppquad
