// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criteria 1-5 share one randomized benchmark.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "toppquad/bench.hpp"
#include "toppquad/nlp/derivative_check.hpp"
#include "toppquad/reparam.hpp"
#include "toppquad/rollout.hpp"

using namespace toppquad;

namespace {

int failures = 0;

void Report(int id, bool pass, const std::string& what, const std::string& measured) {
  std::printf("%s criterion %2d: %s [%s]\n", pass ? "PASS" : "FAIL", id, what.c_str(),
              measured.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string Format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

WaypointSet RandomWaypoints(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 10.0);
  WaypointSet w;
  for (int i = 0; i < 4; ++i) w.positions.emplace_back(u(rng), u(rng), u(rng));
  return w;
}

WaypointSet Points(std::initializer_list<Vec3> p) {
  WaypointSet w;
  w.positions = p;
  return w;
}

double Quadrature(const std::vector<double>& h, double ds) {
  double t = 0.0;
  for (size_t i = 0; i + 1 < h.size(); ++i) t += 2.0 * ds / (std::sqrt(h[i]) + std::sqrt(h[i + 1]));
  return t;
}

void BenchCriteria(int trials, int workers, const std::string& out) {
  BenchConfig c;
  c.trials = trials;
  c.seed = 0;
  c.box = Vec3(10.0, 10.0, 10.0);
  c.waypoints = 4;
  c.planners = AllPlanners();
  c.v_nominal = {1.0, 5.0};
  c.plan.n_grid = 300;
  c.plan.v_max = 5.0;
  c.workers = workers;
  c.out = out;
  c.run_id = "acceptance";
  const std::vector<TrialRecord> records = RunBench(c);
  if (!out.empty()) WriteBenchReport(records, c);
  const BenchSummary s = SummarizeBench(records, c);

  Report(1, s.converged > 0 && s.converged_invalid == 0,
         "every converged toppquad solution passes validation",
         Format("%d converged over %d trials, %d invalid", s.converged, s.trials,
                s.converged_invalid));

  const double infeasible = s.seed_runs ? double(s.seed_infeasible) / s.seed_runs : 0.0;
  Report(2, s.seed_runs >= trials && infeasible >= 0.30,
         "at least 30% of 5 m/s seeds leave the thrust bounds",
         Format("%d of %d = %.1f%%", s.seed_infeasible, s.seed_runs, 100.0 * infeasible));

  Report(3,
         s.mutual_alpha_seed > 0 && s.mutual_alpha_acc > 0 && s.slower_than_alpha_seed == 0 &&
             s.slower_than_alpha_acc == 0 && s.median_improvement_alpha_seed >= 0.20,
         "toppquad no slower than alpha-scaled baselines (1%), median gain over alpha-seed >= 20%",
         Format("slower than alpha-seed %d/%d, than alpha-topp-acc %d/%d, median gain %.1f%%",
                s.slower_than_alpha_seed, s.mutual_alpha_seed, s.slower_than_alpha_acc,
                s.mutual_alpha_acc, 100.0 * s.median_improvement_alpha_seed));

  const double r1 = s.SuccessRate(Planner::kToppQuad, 1.0);
  const double r5 = s.SuccessRate(Planner::kToppQuad, 5.0);
  Report(4, r1 > r5, "success rate from 1 m/s seeds exceeds that from 5 m/s seeds",
         Format("%.3f vs %.3f", r1, r5));

  Report(5,
         s.bidirectional_pairs > 0 && s.bidirectional_slower == 0 && s.bidirectional_negative > 0,
         "bidirectional no slower (1 ms) and some path uses negative thrust",
         Format("%d pairs, %d slower, %d with negative thrust", s.bidirectional_pairs,
                s.bidirectional_slower, s.bidirectional_negative));
}

void Derivatives() {
  std::mt19937_64 rng(606);
  const QuadParams p = QuadParams::CrazyFlie();
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    const PiecewisePolynomialPath poly = FitMinDerivative(RandomWaypoints(rng), SeedOrder::kSnap, 1.0);
    const PathGrid grid = BuildGrid(ToGeometric(poly), 300);
    const ToppDecisionState guess = InitialGuessFromSeed(PolynomialTrajectory(poly), grid, p);
    ToppOptions o;
    o.n = 300;
    o.v_max = 5.0;
    const ToppProblem tp = Assemble(grid, p, guess, o);
    worst = std::max(worst, nlp::CheckDerivatives(tp.problem, tp.z0).max_relative_error());
  }
  Report(6, worst <= 1e-5, "assembled derivatives match central differences on 10 instances",
         Format("max relative error %.2e", worst));
}

void ConvexOracle() {
  // Brute force over h_i = k/7 of the speed bound at the 7 interior nodes.
  const PathGrid line = BuildGrid(
      ToGeometric(FitMinDerivative(Points({Vec3(0, 0, 1), Vec3(5, 0, 1)}), SeedOrder::kSnap, 1.0)), 8);
  ConvexToppSpec spec;
  spec.v_max = 2.0;
  spec.lambda = 1e-9;
  const ConvexToppResult vel = ToppVel(line, spec);
  constexpr int kLevels = 7;
  std::vector<double> ub(line.nodes()), h(line.nodes(), 0.0);
  for (int i = 0; i < line.nodes(); ++i) ub[i] = 4.0 / line.d1[i].squaredNorm();
  double best = std::numeric_limits<double>::infinity();
  std::function<void(int)> search = [&](int i) {
    if (i == line.n) {
      best = std::min(best, Quadrature(h, line.ds));
      return;
    }
    for (int k = 1; k <= kLevels; ++k) {
      h[i] = ub[i] * k / kLevels;
      search(i + 1);
    }
  };
  search(1);
  const double objective = vel.total_time + vel.regularization;
  const double gap = std::abs(objective - best) / best;

  std::mt19937_64 rng(707);
  const QuadParams p = QuadParams::CrazyFlie();
  int ordered = 0, solved = 0;
  for (int k = 0; k < 20; ++k) {
    const PathGrid grid =
        BuildGrid(ToGeometric(FitMinDerivative(RandomWaypoints(rng), SeedOrder::kSnap, 5.0)), 150);
    ConvexToppSpec s;
    s.v_max = 5.0;
    const ConvexToppResult v = ToppVel(grid, s);
    s.include_thrust_bound = true;
    const ConvexToppResult a = ToppAcc(grid, p, s);
    if (!v.success || !a.success) continue;
    ++solved;
    if (a.total_time >= v.total_time * (1.0 - 1e-6)) ++ordered;
  }
  Report(7, vel.success && gap <= 0.01 && solved == 20 && ordered == 20,
         "topp-vel matches lattice search within 1%, topp-acc >= topp-vel on 20 paths",
         Format("lattice gap %.3f%%, ordering %d of %d solved (20 instances)", 100.0 * gap, ordered,
                solved));
}

void AlphaMaximality() {
  const QuadParams p = QuadParams::CrazyFlie();
  auto feasible = [&](const std::shared_ptr<const FlatTrajectory>& base, double alpha) {
    const TimeScaledTrajectory t(base, alpha);
    return ScanThrusts(t, p, t.duration() / 20000).Within(p.u_min, p.u_max);
  };
  std::mt19937_64 rng(808);
  int checked = 0, maximal = 0;
  while (checked < 20) {
    const auto base = std::make_shared<PolynomialTrajectory>(
        FitMinDerivative(RandomWaypoints(rng), SeedOrder::kSnap, 5.0));
    if (feasible(base, 1.0)) continue;
    ++checked;
    const AlphaScaleResult r = AlphaScale(base, p);
    if (feasible(base, r.alpha) && !feasible(base, r.alpha / (1.0 - 1e-3))) ++maximal;
  }
  Report(8, maximal == 20, "alpha feasible and alpha/(1-1e-3) infeasible on 20 seeds",
         Format("%d of %d", maximal, checked));
}

void UnitProperties() {
  const bool constant = TraversalTime(std::vector<double>(11, 4.0), 1.0) == 5.0;

  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> u(0.01, 5.0), kd(0.2, 3.0);
  double dilation = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> h(40);
    for (double& v : h) v = u(rng);
    const double k = kd(rng);
    std::vector<double> scaled = h;
    for (double& v : scaled) v *= k * k;
    const double t = TraversalTime(h, 0.05);
    dilation = std::max(dilation, std::abs(TraversalTime(scaled, 0.05) * k - t) / t);
  }

  double identity = 0.0;
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Quat q = Quat(n(rng), n(rng), n(rng), n(rng)).normalized();
    identity = std::max(identity, (QuatEulerStep(q, Vec3::Zero(), 0.37) - q).cwiseAbs().maxCoeff());
  }

  const QuadParams p = QuadParams::CrazyFlie();
  RigidState s;
  s.position = Vec3(1, -2, 5);
  s.velocity = Vec3(0.5, 0.3, 2.0);
  s.attitude = QuatExp(Vec3(0.2, -0.1, 0.4));
  const RigidState out = Propagate(s, MotorThrusts::Zero(), p, 1.0, 1e-3);
  const double fall = std::max((out.position - (s.position + s.velocity + 0.5 * p.gravity)).norm(),
                               (out.velocity - (s.velocity + p.gravity)).norm());

  Report(9, constant && dilation <= 1e-12 && identity == 0.0 && fall <= 1e-6,
         "quadrature, dilation law, zero-rate quaternion update, free fall",
         Format("T(h=4)=5 %s, dilation %.1e, identity %.1e, free fall %.1e",
                constant ? "exact" : "inexact", dilation, identity, fall));
}

void Trackability() {
  struct Case {
    const char* name;
    WaypointSet w;
  };
  const std::vector<Case> cases = {
      {"line", Points({Vec3(0, 0, 1), Vec3(2, 0, 1)})},
      {"L-curve", Points({Vec3(0, 0, 1), Vec3(1.5, 0, 1), Vec3(1.5, 1.5, 1)})},
      {"X-curve", Points({Vec3(0, 0, 0.5), Vec3(1, 1, 1.5), Vec3(0, 1, 0.5), Vec3(1, 0, 1.5)})},
  };
  PlanSettings s;
  s.v_max = 2.0;
  const QuadParams p = QuadParams::CrazyFlie();
  bool all = true;
  std::string measured;
  for (const Case& c : cases) {
    const PlanOutput plan = Plan(Planner::kToppQuad, c.w, s);
    std::string m;
    if (!plan.record.success) {
      all = false;
      m = std::string(c.name) + " plan failed";
    } else {
      const TimedTrajectory t = SamplePlan(plan, p, 0.01);
      const RolloutMetrics r = Summarize(Simulate(t, p, ControllerGains{}));
      const double ratio = r.settled ? r.settle_time / plan.record.time : INFINITY;
      all = all && !r.diverged && r.settled && ratio <= 1.2;
      m = Format("%s T=%.2fs settle %.2fx%s max err %.3fm", c.name, plan.record.time, ratio,
                 r.diverged ? " diverged" : "", r.max_position_error);
    }
    measured += (measured.empty() ? "" : "; ") + m;
  }
  Report(10, all, "line, L and X trajectories tracked and settled within 1.2x planned time",
         measured);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int trials = 50, workers = 0;
  std::string out;
  app.add_option("--trials", trials, "benchmark trials")->check(CLI::PositiveNumber);
  app.add_option("--workers", workers, "worker threads, 0 for one per core");
  app.add_option("--out", out, "also write the benchmark report under this directory");
  CLI11_PARSE(app, argc, argv);

  BenchCriteria(trials, workers, out);
  Derivatives();
  ConvexOracle();
  AlphaMaximality();
  UnitProperties();
  Trackability();
  std::printf("%d of 10 criteria failed\n", failures);
  return failures ? 1 : 0;
}
