#pragma once

#include <optional>
#include <string>
#include <vector>

#include "toppquad/quad_model.hpp"
#include "toppquad/timed_trajectory.hpp"

namespace toppquad {

// Per-axis gains, normalized by mass (position, velocity) and by inertia
// (attitude, rate), so they command accelerations rather than forces.
struct ControllerGains {
  Vec3 kp = Vec3(8.0, 8.0, 19.0);
  Vec3 kd = Vec3(5.5, 5.5, 8.7);
  Vec3 kr = Vec3(2812.0, 2812.0, 163.0);
  Vec3 kw = Vec3(128.0, 128.0, 73.0);

  // Throws ConfigError unless every gain is positive.
  void Validate() const;
};

struct ReferenceSample {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
  double yaw = 0.0;
  Vec3 body_rate = Vec3::Zero();
};

ReferenceSample ReferenceAt(const TimedTrajectory& traj, int index);

// Geometric tracking controller on SE(3). Holds the last desired attitude so
// that a vanishing force command (free fall) keeps the previous heading.
class Se3Controller {
 public:
  Se3Controller(const QuadParams& params, const ControllerGains& gains);

  // Clamped motor thrusts. `clamped` reports whether any motor hit a bound.
  MotorThrusts Update(const RigidState& state, const ReferenceSample& ref,
                      bool* clamped = nullptr);
  const Mat3& desired_attitude() const { return desired_; }

 private:
  QuadParams params_;
  ControllerGains gains_;
  Mat3 desired_ = Mat3::Identity();
};

// Integrates constant thrusts for `duration` with RK4 steps of at most `dt`,
// renormalizing the attitude after each step.
RigidState Propagate(const RigidState& state, const MotorThrusts& u, const QuadParams& params,
                     double duration, double dt);

struct RolloutOptions {
  double sim_dt = 1e-3;
  // Extra time after the reference ends, cut short once settled.
  double settle_window = 3.0;
  double settle_position = 0.02;
  double settle_velocity = 0.02;
  double settle_hold = 0.5;
  double divergence_factor = 10.0;
  // Start state; the first reference sample when unset.
  std::optional<RigidState> initial;

  void Validate() const;
};

struct RolloutLog {
  std::vector<double> t;
  std::vector<RigidState> state;
  std::vector<Vec3> ref_position, ref_velocity;
  std::vector<MotorThrusts> command;
  std::vector<double> position_error, velocity_error;

  int control_steps = 0;
  int clamped_steps = 0;
  bool diverged = false;
  bool settled = false;
  // Start of the settled stretch; negative unless settled.
  double settle_time = -1.0;
  double reference_duration = 0.0;
  double path_scale = 0.0;

  int size() const { return static_cast<int>(t.size()); }
};

struct RolloutMetrics {
  double max_position_error = 0.0;   // while the reference runs
  double mean_position_error = 0.0;  // while the reference runs
  double final_position_error = 0.0;
  double duration = 0.0;
  double clamp_fraction = 0.0;
  bool diverged = false;
  bool settled = false;
  double settle_time = -1.0;
};

// Perfect-state closed loop. The controller runs at the reference sample
// period with a zero-order hold; the reference holds its last sample
// afterwards. Stops early, flagged diverged, once the
// position error exceeds divergence_factor times the path scale (bounding
// box diagonal, at least 1 m). Throws ConfigError when sim_dt exceeds the
// reference period or the trajectory is empty.
RolloutLog Simulate(const TimedTrajectory& traj, const QuadParams& params,
                    const ControllerGains& gains, const RolloutOptions& options = {});

RolloutMetrics Summarize(const RolloutLog& log);

void ExportRolloutCsv(const RolloutLog& log, const std::string& file);
void ExportRolloutSummary(const RolloutMetrics& metrics, const std::string& file);

}  // namespace toppquad
