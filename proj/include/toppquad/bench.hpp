#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "toppquad/baselines.hpp"
#include "toppquad/geometric_path.hpp"
#include "toppquad/timed_trajectory.hpp"
#include "toppquad/topp_nlp.hpp"

namespace toppquad {

// seed: the polynomial seed as fitted. alpha-*: uniformly slowed until
// thrust-feasible. topp-vel/topp-acc: convex reparameterizations of the seed
// path. toppquad-bi: toppquad with sign-extended motor bounds.
enum class Planner {
  kSeed,
  kAlphaSeed,
  kToppVel,
  kAlphaToppVel,
  kToppAcc,
  kAlphaToppAcc,
  kToppQuad,
  kToppQuadBidirectional,
};

const char* ToString(Planner planner);
// Also accepts "minsnap" and "alpha-minsnap" for the snap-order seed.
Planner ParsePlanner(const std::string& name);
std::vector<Planner> AllPlanners();

struct PlanSettings {
  QuadParams params = QuadParams::CrazyFlie();
  SeedOrder order = SeedOrder::kSnap;
  double v_nominal = 1.0;
  std::optional<double> v_max = 5.0;
  int n_grid = 300;
  double lambda = 1e-6;
  // Template for toppquad runs; n, v_max and bidirectional are overridden.
  ToppOptions topp;
  AlphaScaleOptions alpha;
  // Uniform samples used for the thrust verdict of time-parameterized
  // planners.
  int scan_samples = 2000;

  void Validate() const;
};

struct PlannerRecord {
  Planner planner = Planner::kSeed;
  double v_nominal = 0.0;
  bool success = false;
  // Solver convergence for optimizing planners, true otherwise.
  bool converged = false;
  std::string status;
  double time = 0.0;
  double max_thrust = 0.0;  // N, over samples or solver nodes
  double min_thrust = 0.0;
  // Every motor thrust within the bounds in effect, to 1e-6 N.
  bool feasible = false;
  // toppquad: the full solution validation passed. Others: same as feasible.
  bool valid = false;
  int iterations = 0;
  double wall_time = 0.0;
  double alpha = 1.0;  // 1 unless the planner scales
};

struct PlanOutput {
  PlannerRecord record;
  std::shared_ptr<const GeometricPath> path;
  // Set for every planner except toppquad.
  std::shared_ptr<const FlatTrajectory> trajectory;
  std::optional<ToppSolution> solution;
  std::optional<ValidationReport> validation;
};

// Runs one planner. Planner failures (solver non-convergence, infeasible
// scaling, singular flat outputs) are reported in the record, never thrown;
// invalid settings throw ConfigError.
PlanOutput Plan(Planner planner, const WaypointSet& waypoints, const PlanSettings& settings);

// Uniform samples of a successful plan. Throws InfeasibleError when the plan
// failed.
TimedTrajectory SamplePlan(const PlanOutput& plan, const QuadParams& params, double dt,
                           std::vector<std::string>* warnings = nullptr);

struct BenchConfig {
  int trials = 50;
  uint64_t seed = 0;
  Vec3 box = Vec3(10.0, 10.0, 10.0);
  int waypoints = 4;
  std::vector<Planner> planners = AllPlanners();
  std::vector<double> v_nominal = {1.0, 5.0};
  // Everything except v_nominal, which comes from the list above.
  PlanSettings plan;
  int workers = 0;  // 0: one per hardware thread
  std::string out = "out";
  std::string run_id;  // derived from seed and trial count when empty

  void Validate() const;
  std::string RunId() const;
};

struct Improvement {
  Planner baseline = Planner::kAlphaSeed;
  double baseline_v = 0.0;
  double ratio = 0.0;  // (T_baseline - T_toppquad) / T_baseline
};

struct TrialRecord {
  int trial = 0;
  uint64_t seed = 0;
  WaypointSet waypoints;
  std::vector<PlannerRecord> results;
  // Best successful unidirectional toppquad run against each successful
  // alpha-scaled baseline at the highest nominal speed.
  std::vector<Improvement> improvements;

  const PlannerRecord* Find(Planner planner, double v) const;
  const PlannerRecord* BestToppQuad() const;
};

// Waypoints of trial `index`: uniform in [0, box] from the stream seeded with
// seed ^ index.
WaypointSet TrialWaypoints(const BenchConfig& config, int index);

TrialRecord RunTrial(const BenchConfig& config, int index);

// Runs every trial on a bounded worker pool; records come back in trial
// order whatever the scheduling.
std::vector<TrialRecord> RunBench(const BenchConfig& config);

struct PlannerStats {
  Planner planner = Planner::kSeed;
  double v_nominal = 0.0;
  int runs = 0;
  int successes = 0;
  int feasible = 0;
  double median_time = 0.0;  // over successes
};

struct BenchSummary {
  int trials = 0;
  std::vector<PlannerStats> planners;
  double top_speed = 0.0;  // highest nominal speed
  // Seed trajectories at the top speed with a thrust outside the bounds.
  int seed_infeasible = 0;
  int seed_runs = 0;
  // Best toppquad against the alpha-scaled seed and alpha-scaled topp-acc at
  // the top speed: mutual successes and runs slower by more than 1%.
  int mutual_alpha_seed = 0, slower_than_alpha_seed = 0;
  int mutual_alpha_acc = 0, slower_than_alpha_acc = 0;
  double median_improvement_alpha_seed = 0.0;
  // Converged toppquad solutions that fail validation.
  int converged = 0;
  int converged_invalid = 0;
  // Bidirectional against unidirectional from the same seed.
  int bidirectional_pairs = 0;
  int bidirectional_slower = 0;  // by more than 1e-3 s
  int bidirectional_negative = 0;

  double SuccessRate(Planner planner, double v) const;
};

BenchSummary SummarizeBench(const std::vector<TrialRecord>& records, const BenchConfig& config);

// Writes <out>/<run id>/{trials/trial_NNNN.json, aggregate.csv, summary.md}
// and returns the run directory. Throws IoError naming the path.
std::string WriteBenchReport(const std::vector<TrialRecord>& records, const BenchConfig& config);

std::string TrialToJson(const TrialRecord& record);

}  // namespace toppquad
