#include "toppquad/geometric_path.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "toppquad/errors.hpp"

namespace toppquad {

namespace {

// i! / (i - r)!, zero when r > i.
double FallingFactorial(int i, int r) {
  if (r > i) return 0.0;
  double f = 1.0;
  for (int k = 0; k < r; ++k) f *= i - k;
  return f;
}

// Gram matrix of the r-th sigma-derivatives of the monomials on [0, 1].
Eigen::MatrixXd DerivativeGram(int num_coeffs, int r) {
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(num_coeffs, num_coeffs);
  for (int i = r; i < num_coeffs; ++i) {
    for (int l = r; l < num_coeffs; ++l) {
      q(i, l) = FallingFactorial(i, r) * FallingFactorial(l, r) / (i + l - 2 * r + 1);
    }
  }
  return q;
}

bool ParseRow(const std::string& line, std::vector<double>& out) {
  out.clear();
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto first = cell.find_first_not_of(" \t\r");
    if (first == std::string::npos) return false;
    const char* begin = cell.c_str() + first;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) return false;
    while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
    if (*end != '\0') return false;
    out.push_back(v);
  }
  return !out.empty();
}

}  // namespace

void WaypointSet::Validate() const {
  if (positions.size() < 2) throw ConfigError("at least two waypoints are required");
  if (!yaw.empty() && yaw.size() != positions.size()) {
    throw ConfigError("yaw list must have one entry per waypoint");
  }
  for (const auto& p : positions) {
    if (!p.allFinite()) throw ConfigError("waypoint coordinates must be finite");
  }
  for (size_t i = 0; i + 1 < positions.size(); ++i) {
    if ((positions[i + 1] - positions[i]).norm() <= 1e-12) {
      throw ConfigError("waypoints " + std::to_string(i) + " and " + std::to_string(i + 1) +
                        " coincide");
    }
  }
}

WaypointSet LoadWaypointsCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open waypoint file " + path);
  WaypointSet w;
  std::string line;
  std::vector<double> row;
  int line_no = 0;
  bool has_yaw = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    if (!ParseRow(line, row)) {
      if (w.positions.empty() && line_no == 1) continue;  // header
      throw IoError(path + ":" + std::to_string(line_no) + ": malformed waypoint row");
    }
    if (row.size() != 3 && row.size() != 4) {
      throw IoError(path + ":" + std::to_string(line_no) + ": expected x,y,z[,yaw]");
    }
    if (w.positions.empty()) has_yaw = row.size() == 4;
    if ((row.size() == 4) != has_yaw) {
      throw IoError(path + ":" + std::to_string(line_no) + ": inconsistent column count");
    }
    w.positions.emplace_back(row[0], row[1], row[2]);
    if (has_yaw) w.yaw.push_back(row[3]);
  }
  return w;
}

void SaveWaypointsCsv(const WaypointSet& w, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write waypoint file " + path);
  out << (w.yaw.empty() ? "x,y,z\n" : "x,y,z,yaw\n");
  char buf[128];
  for (size_t i = 0; i < w.positions.size(); ++i) {
    const Vec3& p = w.positions[i];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g", p(0), p(1), p(2));
    out << buf;
    if (!w.yaw.empty()) {
      std::snprintf(buf, sizeof(buf), ",%.17g", w.yaw[i]);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

const char* ToString(SeedOrder order) {
  switch (order) {
    case SeedOrder::kAcceleration:
      return "minacc";
    case SeedOrder::kJerk:
      return "minjerk";
    case SeedOrder::kSnap:
      return "minsnap";
  }
  return "unknown";
}

SeedOrder ParseSeedOrder(const std::string& name) {
  if (name == "minacc" || name == "acc" || name == "2") return SeedOrder::kAcceleration;
  if (name == "minjerk" || name == "jerk" || name == "3") return SeedOrder::kJerk;
  if (name == "minsnap" || name == "snap" || name == "4") return SeedOrder::kSnap;
  throw ConfigError("unknown seed order '" + name + "'");
}

PiecewisePolynomialPath::PiecewisePolynomialPath(std::vector<double> durations,
                                                 std::vector<Coefficients> coefficients,
                                                 int continuity_order)
    : durations_(std::move(durations)),
      coefficients_(std::move(coefficients)),
      continuity_order_(continuity_order) {
  if (durations_.size() != coefficients_.size() || durations_.empty()) {
    throw ConfigError("segment durations and coefficients do not match");
  }
  knots_.assign(1, 0.0);
  for (double d : durations_) {
    if (!(d > 0.0)) throw ConfigError("segment durations must be positive");
    knots_.push_back(knots_.back() + d);
  }
}

int PiecewisePolynomialPath::SegmentAt(double t) const {
  const auto it = std::upper_bound(knots_.begin() + 1, knots_.end() - 1, t);
  return static_cast<int>(it - knots_.begin()) - 1;
}

Vec4 PiecewisePolynomialPath::EvaluateSegment(int j, double t, int derivative) const {
  const double dur = durations_[j];
  const double sigma = (t - knots_[j]) / dur;
  const Coefficients& c = coefficients_[j];
  Vec4 v = Vec4::Zero();
  // Horner on the differentiated coefficients.
  for (int i = static_cast<int>(c.rows()) - 1; i >= derivative; --i) {
    v = v * sigma + FallingFactorial(i, derivative) * c.row(i).transpose();
  }
  return v / std::pow(dur, derivative);
}

Vec4 PiecewisePolynomialPath::Evaluate(double t, int derivative) const {
  t = std::clamp(t, 0.0, duration());
  return EvaluateSegment(SegmentAt(t), t, derivative);
}

PiecewisePolynomialPath FitMinDerivative(const WaypointSet& w, SeedOrder order,
                                         double nominal_velocity) {
  if (w.positions.size() < 2) throw ConfigError("at least two waypoints are required");
  if (!(nominal_velocity > 0.0)) throw ConfigError("nominal velocity must be positive");
  const int k = static_cast<int>(order);
  const int d = 2 * k;  // coefficients per segment
  const int m = w.size() - 1;
  std::vector<double> durations(m);
  for (int j = 0; j < m; ++j) {
    const double dist = (w.positions[j + 1] - w.positions[j]).norm();
    if (!(dist > 1e-12)) {
      throw FitError("segment " + std::to_string(j) + " has zero length", j);
    }
    durations[j] = dist / nominal_velocity;
  }

  const int nv = d * m;
  const int nc = 2 * m + (m + 1) * (k - 1);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nc, nv);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(nc, PiecewisePolynomialPath::kChannels);
  auto target = [&](int i) {
    Vec4 t = Vec4::Zero();
    t.head<3>() = w.positions[i];
    if (!w.yaw.empty()) t(3) = w.yaw[i];
    return t;
  };
  int row = 0;
  for (int j = 0; j < m; ++j) {
    a(row, j * d) = 1.0;
    b.row(row++) = target(j).transpose();
    for (int i = 0; i < d; ++i) a(row, j * d + i) = 1.0;
    b.row(row++) = target(j + 1).transpose();
  }
  for (int r = 1; r < k; ++r) {
    a(row++, r) = FallingFactorial(r, r);
    for (int i = 0; i < d; ++i) a(row, (m - 1) * d + i) = FallingFactorial(i, r);
    ++row;
  }
  for (int j = 0; j + 1 < m; ++j) {
    const double ratio = durations[j] / durations[j + 1];
    for (int r = 1; r < k; ++r) {
      for (int i = 0; i < d; ++i) a(row, j * d + i) = FallingFactorial(i, r);
      a(row, (j + 1) * d + r) = -std::pow(ratio, r) * FallingFactorial(r, r);
      ++row;
    }
  }

  const Eigen::MatrixXd gram = DerivativeGram(d, k);
  std::vector<double> weight(m);
  double wmax = 0.0;
  for (int j = 0; j < m; ++j) {
    weight[j] = std::pow(durations[j], 1 - 2 * k);
    wmax = std::max(wmax, weight[j]);
  }
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nv + nc, nv + nc);
  for (int j = 0; j < m; ++j) kkt.block(j * d, j * d, d, d) = 2.0 * weight[j] / wmax * gram;
  kkt.block(0, nv, nv, nc) = a.transpose();
  kkt.block(nv, 0, nc, nv) = a;
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(nv + nc, PiecewisePolynomialPath::kChannels);
  rhs.bottomRows(nc) = b;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    const int worst = static_cast<int>(
        std::min_element(durations.begin(), durations.end()) - durations.begin());
    throw FitError("minimum-derivative system is rank deficient near segment " +
                       std::to_string(worst),
                   worst);
  }
  const Eigen::MatrixXd sol = lu.solve(rhs);
  std::vector<PiecewisePolynomialPath::Coefficients> coeffs(m);
  for (int j = 0; j < m; ++j) coeffs[j] = sol.block(j * d, 0, d, PiecewisePolynomialPath::kChannels);
  return PiecewisePolynomialPath(durations, coeffs, 2 * k - 2);
}

double DerivativeCost(const PiecewisePolynomialPath& path, int k) {
  double cost = 0.0;
  for (int j = 0; j < path.num_segments(); ++j) {
    const auto& c = path.coefficients(j);
    const Eigen::MatrixXd gram = DerivativeGram(static_cast<int>(c.rows()), k);
    const double scale = std::pow(path.durations()[j], 1 - 2 * k);
    for (int ch = 0; ch < 3; ++ch) cost += scale * c.col(ch).dot(gram * c.col(ch));
  }
  return cost;
}

GeometricPath ToGeometric(const PiecewisePolynomialPath& timed) { return GeometricPath(timed); }

PathGrid BuildGrid(const GeometricPath& path, int n) {
  if (n < 2) throw ConfigError("grid needs at least two intervals");
  PathGrid g;
  g.n = n;
  g.ds = path.length() / n;
  g.s.resize(n + 1);
  g.gamma.resize(n + 1);
  g.d1.resize(n + 1);
  g.d2.resize(n + 1);
  for (int i = 0; i <= n; ++i) {
    g.s[i] = i == n ? path.length() : i * g.ds;
    g.gamma[i] = path.Derivative(g.s[i], 0);
    g.d1[i] = path.Derivative(g.s[i], 1);
    g.d2[i] = path.Derivative(g.s[i], 2);
  }
  return g;
}

void ExportPathCsv(const GeometricPath& path, int samples, const std::string& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write path file " + file);
  out << "s,x,y,z,dx,dy,dz,ddx,ddy,ddz\n";
  char buf[512];
  samples = std::max(samples, 2);
  for (int i = 0; i < samples; ++i) {
    const double s = path.length() * i / (samples - 1);
    const Vec3 p = path.Derivative(s, 0), v = path.Derivative(s, 1), a = path.Derivative(s, 2);
    std::snprintf(buf, sizeof(buf),
                  "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s, p(0),
                  p(1), p(2), v(0), v(1), v(2), a(0), a(1), a(2));
    out << buf;
  }
  if (!out) throw IoError("write failed for " + file);
}

}  // namespace toppquad
