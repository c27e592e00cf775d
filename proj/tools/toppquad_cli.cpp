// Command-line front end: plan, bench, rollout and compare.
//
// Exit status: 0 on success, 1 when a planner fails or a rollout diverges,
// 2 on invalid input.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "toppquad/bench.hpp"
#include "toppquad/config.hpp"
#include "toppquad/errors.hpp"
#include "toppquad/rollout.hpp"

using namespace toppquad;
namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config;
  std::string waypoints;
  std::optional<double> v_nominal;
  std::string vmax;
  std::optional<int> n_grid;
  std::optional<double> lambda;
  bool thrust_bound = false;
  bool bidirectional = false;
  std::string planner;
  bool verbose = false;
};

void AddCommon(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "YAML configuration file");
  app->add_option("--vmax", f.vmax, "speed bound in m/s, or 'none'");
  app->add_option("--n-grid", f.n_grid, "grid intervals")->check(CLI::PositiveNumber);
  app->add_option("--lambda", f.lambda, "weight on h''' for topp-vel and topp-acc")
      ->check(CLI::PositiveNumber);
  app->add_flag("--thrust-bound", f.thrust_bound, "use topp-acc where topp-vel is selected");
  app->add_flag("--bidirectional", f.bidirectional, "motor thrusts in [-u_max, u_max]");
  app->add_flag("--verbose", f.verbose, "solver iteration log on stderr");
}

Planner Adjust(Planner p, const CommonFlags& f) {
  if (f.thrust_bound && p == Planner::kToppVel) return Planner::kToppAcc;
  if (f.thrust_bound && p == Planner::kAlphaToppVel) return Planner::kAlphaToppAcc;
  if (f.bidirectional && p == Planner::kToppQuad) return Planner::kToppQuadBidirectional;
  return p;
}

Config Load(const CommonFlags& f) {
  Config c = f.config.empty() ? Config{} : LoadConfig(f.config);
  if (!f.waypoints.empty()) c.waypoints = LoadWaypointsCsv(f.waypoints);
  if (f.v_nominal) c.plan.v_nominal = *f.v_nominal;
  if (f.vmax == "none")
    c.plan.v_max.reset();
  else if (!f.vmax.empty())
    c.plan.v_max = std::stod(f.vmax);
  if (f.n_grid) c.plan.n_grid = *f.n_grid;
  if (f.lambda) c.plan.lambda = *f.lambda;
  if (!f.planner.empty()) c.planner = ParsePlanner(f.planner);
  c.planner = Adjust(c.planner, f);
  if (f.verbose) {
    c.plan.topp.solver.verbose = true;
    c.plan.topp.solver.log = &std::cerr;
  }
  c.plan.params = c.params;
  c.plan.Validate();
  return c;
}

void PrintRecord(const PlannerRecord& r, const QuadParams& bounds) {
  std::printf("planner      %s\n", ToString(r.planner));
  std::printf("status       %s\n", r.status.c_str());
  std::printf("time         %.6f s\n", r.time);
  std::printf("thrust       [%.6f, %.6f] N, bounds [%g, %g] N\n", r.min_thrust, r.max_thrust,
              bounds.u_min.minCoeff(), bounds.u_max.maxCoeff());
  std::printf("feasible     %s\n", r.feasible ? "yes" : "no");
  if (r.alpha != 1.0) std::printf("alpha        %.6f\n", r.alpha);
  std::printf("iterations   %d\n", r.iterations);
  std::printf("wall time    %.3f s\n", r.wall_time);
}

int RunPlan(const CommonFlags& f, const std::string& out, const std::string& format_name,
            double dt) {
  Config c = Load(f);
  if (dt > 0.0) c.sample_dt = dt;
  if (c.waypoints.size() == 0) throw ConfigError("no waypoints: pass --waypoints or set them in the config");
  const TrajectoryFormat format = ParseTrajectoryFormat(format_name);
  const PlanOutput plan = Plan(c.planner, c.waypoints, c.plan);
  const bool bi = c.planner == Planner::kToppQuadBidirectional;
  PrintRecord(plan.record, bi ? c.params.Bidirectional() : c.params);
  if (plan.validation) {
    const ValidationReport& v = *plan.validation;
    std::printf("validation   %s (residual %.2e, thrust violation %.2e N, norm error %.2e)\n",
                v.pass ? "pass" : "fail",
                std::max({v.euler_h, v.euler_w, v.quaternion_update, v.translational, v.rotational,
                          v.boundary}),
                v.thrust_violation, v.quaternion_norm);
  }
  if (!plan.record.success) {
    std::printf("FAILED: %s\n", plan.record.status.c_str());
    return 1;
  }
  std::vector<std::string> warnings;
  TimedTrajectory traj = SamplePlan(plan, c.params, c.sample_dt, &warnings);
  traj.metadata.params_hash = ParamsHash(c.params);
  for (const std::string& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  fs::create_directories(out);
  const std::string file =
      (fs::path(out) / (format == TrajectoryFormat::kCsv ? "trajectory.csv" : "trajectory.json")).string();
  ExportTrajectory(traj, file, format);
  ExportPathCsv(*plan.path, 1000, (fs::path(out) / "path.csv").string());
  std::printf("wrote        %s (%d samples)\n", file.c_str(), traj.size());
  return 0;
}

int RunBenchCommand(const CommonFlags& f, std::optional<uint64_t> seed, std::optional<int> trials,
                    const std::vector<double>& v_nominal, const std::vector<std::string>& planners,
                    std::optional<int> workers, const std::string& out) {
  Config c = Load(f);
  BenchConfig b = c.bench;
  b.plan = c.plan;
  if (seed) b.seed = *seed;
  if (trials) b.trials = *trials;
  if (!v_nominal.empty()) b.v_nominal = v_nominal;
  if (!planners.empty()) {
    b.planners.clear();
    for (const std::string& p : planners) b.planners.push_back(Adjust(ParsePlanner(p), f));
  }
  if (workers) b.workers = *workers;
  if (!out.empty()) b.out = out;
  b.Validate();
  const std::vector<TrialRecord> records = RunBench(b);
  const std::string dir = WriteBenchReport(records, b);
  std::ifstream summary(fs::path(dir) / "summary.md");
  std::cout << summary.rdbuf();
  std::printf("\nreport in %s\n", dir.c_str());
  return 0;
}

int RunRollout(const CommonFlags& f, const std::string& file, double sim_dt, const std::string& out) {
  const Config c = Load(f);
  const std::string ext = fs::path(file).extension().string();
  const TimedTrajectory traj =
      ImportTrajectory(file, ext == ".json" ? TrajectoryFormat::kJson : TrajectoryFormat::kCsv);
  RolloutOptions o = c.rollout;
  if (sim_dt > 0.0) o.sim_dt = sim_dt;
  const RolloutLog log = Simulate(traj, c.params, c.gains, o);
  const RolloutMetrics m = Summarize(log);
  std::printf("reference    %.3f s\n", log.reference_duration);
  std::printf("simulated    %.3f s\n", m.duration);
  std::printf("max error    %.4f m\n", m.max_position_error);
  std::printf("mean error   %.4f m\n", m.mean_position_error);
  std::printf("final error  %.4f m\n", m.final_position_error);
  std::printf("clamped      %.2f%% of control steps\n", 100.0 * m.clamp_fraction);
  if (m.settled)
    std::printf("settled      at %.3f s (%.2fx the reference)\n", m.settle_time,
                m.settle_time / log.reference_duration);
  else
    std::printf("settled      no\n");
  std::printf("diverged     %s\n", m.diverged ? "yes" : "no");
  if (!out.empty()) {
    fs::create_directories(out);
    ExportRolloutCsv(log, (fs::path(out) / "rollout.csv").string());
    ExportRolloutSummary(m, (fs::path(out) / "summary.json").string());
  }
  return m.diverged ? 1 : 0;
}

int RunCompare(const CommonFlags& f, const std::vector<std::string>& planners,
               const std::string& out) {
  const Config c = Load(f);
  if (c.waypoints.size() == 0) throw ConfigError("no waypoints: pass --waypoints or set them in the config");
  std::vector<Planner> list;
  for (const std::string& p : planners) list.push_back(Adjust(ParsePlanner(p), f));
  if (list.empty()) list = AllPlanners();
  std::printf("%-16s %10s %9s %11s %11s %9s  %s\n", "planner", "time (s)", "feasible", "min u (N)",
              "max u (N)", "alpha", "status");
  nlohmann::json report = nlohmann::json::array();
  for (Planner p : list) {
    const PlannerRecord r = Plan(p, c.waypoints, c.plan).record;
    std::printf("%-16s %10.4f %9s %11.5f %11.5f %9.4f  %s\n", ToString(p), r.time,
                r.feasible ? "yes" : "no", r.min_thrust, r.max_thrust, r.alpha, r.status.c_str());
    report.push_back({{"planner", ToString(p)},
                      {"success", r.success},
                      {"time", r.time},
                      {"feasible", r.feasible},
                      {"min_thrust", r.min_thrust},
                      {"max_thrust", r.max_thrust},
                      {"alpha", r.alpha},
                      {"status", r.status}});
  }
  if (!out.empty()) {
    std::ofstream js(out);
    if (!js) throw IoError("cannot open " + out + " for writing");
    js << report.dump(2) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-optimal path parameterization for quadrotors"};
  app.require_subcommand(1);

  CommonFlags plan_flags, bench_flags, rollout_flags, compare_flags;

  CLI::App* plan = app.add_subcommand("plan", "plan one trajectory through waypoints");
  AddCommon(plan, plan_flags);
  plan->add_option("--waypoints", plan_flags.waypoints, "CSV with x,y,z[,yaw] rows");
  plan->add_option("--planner", plan_flags.planner, "planner name");
  plan->add_option("--v-nominal,--v", plan_flags.v_nominal, "seed speed in m/s")
      ->check(CLI::PositiveNumber);
  std::string plan_out = "out/plan", format = "csv";
  plan->add_option("--out", plan_out, "output directory");
  plan->add_option("--format", format, "csv or json");
  double plan_dt = 0.0;
  plan->add_option("--dt", plan_dt, "sampling period in s")->check(CLI::PositiveNumber);

  CLI::App* bench = app.add_subcommand("bench", "randomized planner comparison");
  AddCommon(bench, bench_flags);
  std::optional<uint64_t> seed;
  std::optional<int> trials, workers;
  std::vector<double> bench_v;
  std::vector<std::string> bench_planners;
  std::string bench_out;
  bench->add_option("--seed", seed, "master seed");
  bench->add_option("--trials", trials, "number of trials")->check(CLI::PositiveNumber);
  bench->add_option("--v-nominal", bench_v, "seed speeds in m/s");
  bench->add_option("--planner", bench_planners, "planners to run");
  bench->add_option("--workers", workers, "worker threads, 0 for one per core");
  bench->add_option("--out", bench_out, "report root directory");

  CLI::App* rollout = app.add_subcommand("rollout", "simulate the tracking controller");
  AddCommon(rollout, rollout_flags);
  std::string traj_file, rollout_out;
  double sim_dt = 0.0;
  rollout->add_option("trajectory", traj_file, "trajectory CSV or JSON")->required();
  rollout->add_option("--sim-dt", sim_dt, "integration step in s");
  rollout->add_option("--out", rollout_out, "directory for the log and summary");

  CLI::App* compare = app.add_subcommand("compare", "run several planners on one waypoint set");
  AddCommon(compare, compare_flags);
  std::vector<std::string> compare_planners;
  std::string compare_out;
  compare->add_option("--waypoints", compare_flags.waypoints, "CSV with x,y,z[,yaw] rows");
  compare->add_option("--planner", compare_planners, "planners to run (default all)");
  compare->add_option("--v-nominal,--v", compare_flags.v_nominal, "seed speed in m/s")
      ->check(CLI::PositiveNumber);
  compare->add_option("--out", compare_out, "JSON report file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*plan) return RunPlan(plan_flags, plan_out, format, plan_dt);
    if (*bench)
      return RunBenchCommand(bench_flags, seed, trials, bench_v, bench_planners, workers, bench_out);
    if (*rollout) return RunRollout(rollout_flags, traj_file, sim_dt, rollout_out);
    if (*compare) return RunCompare(compare_flags, compare_planners, compare_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
