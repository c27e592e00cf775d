#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "toppquad/quad_model.hpp"

namespace toppquad {

struct WaypointSet {
  std::vector<Vec3> positions;
  // Either empty or one yaw per waypoint, rad.
  std::vector<double> yaw;

  // Throws ConfigError with fewer than two waypoints, repeated consecutive
  // waypoints or a yaw list of the wrong length.
  void Validate() const;
  int size() const { return static_cast<int>(positions.size()); }
};

// Reads x,y,z[,yaw] rows. A first line that does not parse as numbers is
// treated as a header. Throws IoError on unreadable files or malformed rows.
WaypointSet LoadWaypointsCsv(const std::string& path);
void SaveWaypointsCsv(const WaypointSet& waypoints, const std::string& path);

// Minimization order of the seed fit.
enum class SeedOrder { kAcceleration = 2, kJerk = 3, kSnap = 4 };

const char* ToString(SeedOrder order);
SeedOrder ParseSeedOrder(const std::string& name);

// Piecewise polynomial in time with four channels (x, y, z, yaw). Each
// segment stores coefficients in the normalized variable sigma = tau / T_j,
// tau being the time since the segment start.
class PiecewisePolynomialPath {
 public:
  static constexpr int kChannels = 4;
  using Coefficients = Eigen::Matrix<double, Eigen::Dynamic, kChannels>;

  PiecewisePolynomialPath() = default;
  PiecewisePolynomialPath(std::vector<double> durations, std::vector<Coefficients> coefficients,
                          int continuity_order);

  int num_segments() const { return static_cast<int>(durations_.size()); }
  double duration() const { return knots_.empty() ? 0.0 : knots_.back(); }
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& durations() const { return durations_; }
  const Coefficients& coefficients(int segment) const { return coefficients_[segment]; }
  // Derivatives up to this order are continuous at interior knots.
  int continuity_order() const { return continuity_order_; }

  // Derivative of the given order of all channels at time t, clamped to the
  // domain. At an interior knot the right-hand segment is used.
  Vec4 Evaluate(double t, int derivative = 0) const;
  // Same, but evaluating a specific segment (for one-sided knot checks).
  Vec4 EvaluateSegment(int segment, double t, int derivative) const;
  int SegmentAt(double t) const;

 private:
  std::vector<double> durations_;
  std::vector<double> knots_;
  std::vector<Coefficients> coefficients_;
  int continuity_order_ = 0;
};

// Fits the polynomial of degree 2k-1 per segment minimizing the integral of
// the squared k-th derivative, with segment times distance / nominal_velocity,
// exact waypoint interpolation, zero derivatives 1..k-1 at both ends and
// C^(k-1) continuity at interior knots. Throws FitError naming the segment of
// a degenerate system and ConfigError on invalid inputs.
PiecewisePolynomialPath FitMinDerivative(const WaypointSet& waypoints, SeedOrder order,
                                         double nominal_velocity);

// Integral of the squared k-th derivative of the position channels.
double DerivativeCost(const PiecewisePolynomialPath& path, int k);

// The seed trajectory viewed as a geometric path with s identified with the
// seed time.
class GeometricPath {
 public:
  GeometricPath() = default;
  explicit GeometricPath(PiecewisePolynomialPath seed) : seed_(std::move(seed)) {}

  double length() const { return seed_.duration(); }
  Vec3 Position(double s) const { return seed_.Evaluate(s, 0).head<3>(); }
  // k-th derivative with respect to s, k in [0, 5].
  Vec3 Derivative(double s, int k) const { return seed_.Evaluate(s, k).head<3>(); }
  double Yaw(double s, int k = 0) const { return seed_.Evaluate(s, k)(3); }
  const PiecewisePolynomialPath& seed() const { return seed_; }

 private:
  PiecewisePolynomialPath seed_;
};

GeometricPath ToGeometric(const PiecewisePolynomialPath& timed);

struct PathGrid {
  int n = 0;  // number of intervals; there are n + 1 nodes
  double ds = 0.0;
  std::vector<double> s;
  std::vector<Vec3> gamma, d1, d2;  // gamma, gamma', gamma''

  int nodes() const { return n + 1; }
};

// Uniform grid with n intervals. Throws ConfigError when n < 2.
PathGrid BuildGrid(const GeometricPath& path, int n);

// Writes s, x, y, z, dx, dy, dz, ddx, ddy, ddz at `samples` uniformly spaced
// parameters.
void ExportPathCsv(const GeometricPath& path, int samples, const std::string& file);

}  // namespace toppquad
