#include "toppquad/bench.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include "toppquad/errors.hpp"

namespace toppquad {

namespace {

struct PlannerName {
  Planner planner;
  const char* name;
};

constexpr PlannerName kNames[] = {
    {Planner::kSeed, "seed"},
    {Planner::kAlphaSeed, "alpha-seed"},
    {Planner::kToppVel, "topp-vel"},
    {Planner::kAlphaToppVel, "alpha-topp-vel"},
    {Planner::kToppAcc, "topp-acc"},
    {Planner::kAlphaToppAcc, "alpha-topp-acc"},
    {Planner::kToppQuad, "toppquad"},
    {Planner::kToppQuadBidirectional, "toppquad-bi"},
};

bool IsAlpha(Planner p) {
  return p == Planner::kAlphaSeed || p == Planner::kAlphaToppVel || p == Planner::kAlphaToppAcc;
}

bool IsToppQuad(Planner p) {
  return p == Planner::kToppQuad || p == Planner::kToppQuadBidirectional;
}

double Median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

void FinishFlat(PlanOutput& out, std::shared_ptr<const FlatTrajectory> traj,
                const PlanSettings& s) {
  PlannerRecord& r = out.record;
  const ThrustExtremes ex = ScanThrusts(*traj, s.params, traj->duration() / s.scan_samples);
  r.time = traj->duration();
  r.max_thrust = ex.max_thrust;
  r.min_thrust = ex.min_thrust;
  r.feasible = ex.Within(s.params.u_min, s.params.u_max, -ValidationReport::kThrustTol);
  r.valid = r.feasible;
  r.success = true;
  r.status = ex.singular ? "singular flat output" : "ok";
  out.trajectory = std::move(traj);
}

void ScaleToFeasible(PlanOutput& out, std::shared_ptr<const FlatTrajectory> base,
                     const PlanSettings& s) {
  const AlphaScaleResult a = AlphaScale(std::move(base), s.params, s.alpha);
  out.record.alpha = a.alpha;
  FinishFlat(out, a.trajectory, s);
}

// The cold start can settle in a local optimum slower than the unidirectional
// one, whose solution is also feasible here, so restart from it as well and
// keep the faster.
ToppSolution SolveBidirectional(const PathGrid& grid, const QuadParams& params, ToppOptions opts,
                                const ToppDecisionState& guess) {
  opts.bidirectional = true;
  ToppSolution best = SolveToppQuad(grid, params, opts, guess);
  ToppOptions uni_opts = opts;
  uni_opts.bidirectional = false;
  const ToppSolution uni = SolveToppQuad(grid, params, uni_opts, guess);
  if (!uni.success) return best;
  ToppSolution restart = SolveToppQuad(grid, params, opts, uni.state);
  restart.guess_time = best.guess_time;
  if (restart.success && (!best.success || restart.total_time < best.total_time))
    best = std::move(restart);
  return best;
}

}  // namespace

const char* ToString(Planner planner) {
  for (const auto& n : kNames)
    if (n.planner == planner) return n.name;
  return "unknown";
}

Planner ParsePlanner(const std::string& name) {
  if (name == "minsnap") return Planner::kSeed;
  if (name == "alpha-minsnap") return Planner::kAlphaSeed;
  for (const auto& n : kNames)
    if (name == n.name) return n.planner;
  throw ConfigError("unknown planner '" + name + "'");
}

std::vector<Planner> AllPlanners() {
  std::vector<Planner> all;
  for (const auto& n : kNames) all.push_back(n.planner);
  return all;
}

void PlanSettings::Validate() const {
  if (!(v_nominal > 0.0)) throw ConfigError("nominal velocity must be positive");
  if (v_max && !(*v_max > 0.0)) throw ConfigError("v_max must be positive");
  if (n_grid < 2) throw ConfigError("n_grid must be at least 2");
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (scan_samples < 1) throw ConfigError("scan_samples must be positive");
}

PlanOutput Plan(Planner planner, const WaypointSet& waypoints, const PlanSettings& s) {
  s.Validate();
  PlanOutput out;
  PlannerRecord& r = out.record;
  r.planner = planner;
  r.v_nominal = s.v_nominal;
  const auto start = std::chrono::steady_clock::now();
  try {
    const PiecewisePolynomialPath poly = FitMinDerivative(waypoints, s.order, s.v_nominal);
    out.path = std::make_shared<GeometricPath>(ToGeometric(poly));
    switch (planner) {
      case Planner::kSeed:
        r.converged = true;
        FinishFlat(out, std::make_shared<PolynomialTrajectory>(poly), s);
        break;
      case Planner::kAlphaSeed:
        r.converged = true;
        ScaleToFeasible(out, std::make_shared<PolynomialTrajectory>(poly), s);
        break;
      case Planner::kToppVel:
      case Planner::kAlphaToppVel:
      case Planner::kToppAcc:
      case Planner::kAlphaToppAcc: {
        ConvexToppSpec spec;
        spec.v_max = s.v_max;
        spec.lambda = s.lambda;
        spec.include_thrust_bound = planner == Planner::kToppAcc || planner == Planner::kAlphaToppAcc;
        const ConvexToppResult c = SolveConvexTopp(BuildGrid(*out.path, s.n_grid), s.params, spec);
        r.iterations = c.report.iterations;
        r.converged = c.report.converged();
        if (!c.success) {
          r.status = c.report.message.empty() ? "convex solve failed" : c.report.message;
          break;
        }
        auto traj = std::make_shared<ReparameterizedTrajectory>(*out.path, c.profile);
        if (IsAlpha(planner))
          ScaleToFeasible(out, traj, s);
        else
          FinishFlat(out, traj, s);
        break;
      }
      case Planner::kToppQuad:
      case Planner::kToppQuadBidirectional: {
        ToppOptions opts = s.topp;
        opts.n = s.n_grid;
        opts.v_max = s.v_max;
        opts.bidirectional = planner == Planner::kToppQuadBidirectional;
        const PathGrid grid = BuildGrid(*out.path, opts.n);
        const ToppDecisionState guess =
            InitialGuessFromSeed(PolynomialTrajectory(poly), grid, s.params);
        ToppSolution sol = opts.bidirectional ? SolveBidirectional(grid, s.params, opts, guess)
                                              : SolveToppQuad(grid, s.params, opts, guess);
        out.validation = ValidateSolution(sol, s.params, opts);
        r.success = sol.success;
        r.converged = sol.report.converged();
        r.status = sol.success ? "ok" : sol.failure_reason;
        r.time = sol.total_time;
        r.iterations = sol.report.iterations;
        r.max_thrust = -std::numeric_limits<double>::infinity();
        r.min_thrust = std::numeric_limits<double>::infinity();
        for (const MotorThrusts& u : sol.state.u) {
          r.max_thrust = std::max(r.max_thrust, u.maxCoeff());
          r.min_thrust = std::min(r.min_thrust, u.minCoeff());
        }
        r.feasible = out.validation->thrust_violation <= ValidationReport::kThrustTol;
        r.valid = out.validation->pass;
        out.solution = std::move(sol);
        break;
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    r.success = false;
    r.status = e.what();
  }
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

TimedTrajectory SamplePlan(const PlanOutput& plan, const QuadParams& params, double dt,
                           std::vector<std::string>* warnings) {
  if (!plan.record.success) throw InfeasibleError("cannot sample a failed plan: " + plan.record.status);
  TimedTrajectory t;
  if (plan.solution) {
    const QuadParams eff =
        plan.solution->bidirectional ? params.Bidirectional() : params;
    t = SampleSolution(*plan.solution, eff, dt, plan.path.get(), warnings);
    t.metadata.source = ToString(plan.record.planner);
  } else {
    t = SampleFlat(*plan.trajectory, params, dt, ToString(plan.record.planner));
  }
  return t;
}

void BenchConfig::Validate() const {
  if (trials < 1) throw ConfigError("trial count must be at least 1");
  if (!(box.minCoeff() > 0.0)) throw ConfigError("box extents must be positive");
  if (waypoints < 2) throw ConfigError("at least two waypoints per trial");
  if (planners.empty()) throw ConfigError("no planners selected");
  if (v_nominal.empty()) throw ConfigError("no nominal velocities");
  for (double v : v_nominal)
    if (!(v > 0.0)) throw ConfigError("nominal velocities must be positive");
  if (workers < 0) throw ConfigError("workers must be non-negative");
  PlanSettings check = plan;
  check.v_nominal = v_nominal.front();
  check.Validate();
}

std::string BenchConfig::RunId() const {
  if (!run_id.empty()) return run_id;
  return "seed" + std::to_string(seed) + "-trials" + std::to_string(trials);
}

const PlannerRecord* TrialRecord::Find(Planner planner, double v) const {
  for (const PlannerRecord& r : results)
    if (r.planner == planner && r.v_nominal == v) return &r;
  return nullptr;
}

const PlannerRecord* TrialRecord::BestToppQuad() const {
  const PlannerRecord* best = nullptr;
  for (const PlannerRecord& r : results)
    if (r.planner == Planner::kToppQuad && r.success && (!best || r.time < best->time)) best = &r;
  return best;
}

WaypointSet TrialWaypoints(const BenchConfig& config, int index) {
  std::mt19937_64 rng(config.seed ^ static_cast<uint64_t>(index));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  WaypointSet w;
  while (w.size() < config.waypoints) {
    const Vec3 p(u(rng) * config.box.x(), u(rng) * config.box.y(), u(rng) * config.box.z());
    if (w.size() > 0 && (p - w.positions.back()).norm() < 1e-3) continue;
    w.positions.push_back(p);
  }
  return w;
}

TrialRecord RunTrial(const BenchConfig& config, int index) {
  TrialRecord t;
  t.trial = index;
  t.seed = config.seed ^ static_cast<uint64_t>(index);
  t.waypoints = TrialWaypoints(config, index);
  for (double v : config.v_nominal) {
    PlanSettings s = config.plan;
    s.v_nominal = v;
    for (Planner p : config.planners) t.results.push_back(Plan(p, t.waypoints, s).record);
  }
  const double top = *std::max_element(config.v_nominal.begin(), config.v_nominal.end());
  if (const PlannerRecord* best = t.BestToppQuad()) {
    for (Planner b : {Planner::kAlphaSeed, Planner::kAlphaToppVel, Planner::kAlphaToppAcc}) {
      const PlannerRecord* r = t.Find(b, top);
      if (r && r->success) t.improvements.push_back({b, top, (r->time - best->time) / r->time});
    }
  }
  return t;
}

std::vector<TrialRecord> RunBench(const BenchConfig& config) {
  config.Validate();
  std::vector<TrialRecord> records(config.trials);
  int workers = config.workers > 0 ? config.workers
                                   : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, config.trials);
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next++; i < config.trials; i = next++) records[i] = RunTrial(config, i);
  };
  std::vector<std::thread> pool;
  for (int k = 1; k < workers; ++k) pool.emplace_back(work);
  work();
  for (std::thread& th : pool) th.join();
  return records;
}

double BenchSummary::SuccessRate(Planner planner, double v) const {
  for (const PlannerStats& s : planners)
    if (s.planner == planner && s.v_nominal == v) return s.runs ? double(s.successes) / s.runs : 0.0;
  return 0.0;
}

BenchSummary SummarizeBench(const std::vector<TrialRecord>& records, const BenchConfig& config) {
  BenchSummary sum;
  sum.trials = static_cast<int>(records.size());
  sum.top_speed = *std::max_element(config.v_nominal.begin(), config.v_nominal.end());
  for (double v : config.v_nominal) {
    for (Planner p : config.planners) {
      PlannerStats st;
      st.planner = p;
      st.v_nominal = v;
      std::vector<double> times;
      for (const TrialRecord& t : records) {
        const PlannerRecord* r = t.Find(p, v);
        if (!r) continue;
        ++st.runs;
        if (r->success) {
          ++st.successes;
          times.push_back(r->time);
          if (r->feasible) ++st.feasible;
        }
      }
      st.median_time = Median(times);
      sum.planners.push_back(st);
    }
  }

  std::vector<double> improvements;
  for (const TrialRecord& t : records) {
    if (const PlannerRecord* s = t.Find(Planner::kSeed, sum.top_speed); s && s->success) {
      ++sum.seed_runs;
      if (!s->feasible) ++sum.seed_infeasible;
    }
    if (const PlannerRecord* best = t.BestToppQuad()) {
      if (const PlannerRecord* a = t.Find(Planner::kAlphaSeed, sum.top_speed); a && a->success) {
        ++sum.mutual_alpha_seed;
        if (best->time > 1.01 * a->time) ++sum.slower_than_alpha_seed;
        improvements.push_back((a->time - best->time) / a->time);
      }
      if (const PlannerRecord* a = t.Find(Planner::kAlphaToppAcc, sum.top_speed); a && a->success) {
        ++sum.mutual_alpha_acc;
        if (best->time > 1.01 * a->time) ++sum.slower_than_alpha_acc;
      }
    }
    for (const PlannerRecord& r : t.results) {
      if (!IsToppQuad(r.planner) || !r.converged) continue;
      ++sum.converged;
      if (!r.valid) ++sum.converged_invalid;
    }
    for (double v : config.v_nominal) {
      const PlannerRecord* uni = t.Find(Planner::kToppQuad, v);
      const PlannerRecord* bi = t.Find(Planner::kToppQuadBidirectional, v);
      if (!uni || !bi || !uni->success || !bi->success) continue;
      ++sum.bidirectional_pairs;
      if (bi->time > uni->time + 1e-3) ++sum.bidirectional_slower;
      if (bi->min_thrust < 0.0) ++sum.bidirectional_negative;
    }
  }
  sum.median_improvement_alpha_seed = Median(improvements);
  return sum;
}

namespace {

nlohmann::json RecordJson(const PlannerRecord& r) {
  return {{"planner", ToString(r.planner)}, {"v_nominal", r.v_nominal},
          {"success", r.success},           {"converged", r.converged},
          {"status", r.status},             {"time", r.time},
          {"max_thrust", r.max_thrust},     {"min_thrust", r.min_thrust},
          {"feasible", r.feasible},         {"valid", r.valid},
          {"iterations", r.iterations},
          {"wall_time", r.wall_time},       {"alpha", r.alpha}};
}

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::string Num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void WriteFile(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + file.string());
}

}  // namespace

std::string TrialToJson(const TrialRecord& t) {
  nlohmann::json j;
  j["trial"] = t.trial;
  j["seed"] = t.seed;
  j["waypoints"] = nlohmann::json::array();
  for (const Vec3& p : t.waypoints.positions) j["waypoints"].push_back({p.x(), p.y(), p.z()});
  j["results"] = nlohmann::json::array();
  for (const PlannerRecord& r : t.results) j["results"].push_back(RecordJson(r));
  j["improvements"] = nlohmann::json::array();
  for (const Improvement& i : t.improvements)
    j["improvements"].push_back(
        {{"baseline", ToString(i.baseline)}, {"baseline_v", i.baseline_v}, {"ratio", i.ratio}});
  return j.dump(2);
}

std::string WriteBenchReport(const std::vector<TrialRecord>& records, const BenchConfig& config) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(config.out) / config.RunId();
  std::error_code ec;
  fs::create_directories(dir / "trials", ec);
  if (ec) throw IoError("cannot create " + (dir / "trials").string() + ": " + ec.message());

  for (const TrialRecord& t : records) {
    char name[32];
    std::snprintf(name, sizeof(name), "trial_%04d.json", t.trial);
    WriteFile(dir / "trials" / name, TrialToJson(t) + "\n");
  }

  std::ostringstream csv;
  csv << "trial,seed,planner,v_nominal,success,converged,feasible,valid,time,max_thrust,min_thrust,"
         "alpha,iterations,wall_time,improvement_vs_alpha_seed,improvement_vs_alpha_topp_acc,"
         "status\n";
  for (const TrialRecord& t : records) {
    const PlannerRecord* best = t.BestToppQuad();
    for (const PlannerRecord& r : t.results) {
      std::string vs_seed, vs_acc;
      if (&r == best) {
        for (const Improvement& i : t.improvements) {
          if (i.baseline == Planner::kAlphaSeed) vs_seed = Num(i.ratio);
          if (i.baseline == Planner::kAlphaToppAcc) vs_acc = Num(i.ratio);
        }
      }
      csv << t.trial << ',' << t.seed << ',' << ToString(r.planner) << ',' << Num(r.v_nominal)
          << ',' << r.success << ',' << r.converged << ',' << r.feasible << ',' << r.valid << ','
          << Num(r.time)
          << ',' << Num(r.max_thrust) << ',' << Num(r.min_thrust) << ',' << Num(r.alpha) << ','
          << r.iterations << ',' << Num(r.wall_time) << ',' << vs_seed << ',' << vs_acc << ','
          << CsvField(r.status) << '\n';
    }
  }
  WriteFile(dir / "aggregate.csv", csv.str());

  const BenchSummary s = SummarizeBench(records, config);
  std::ostringstream md;
  char line[256];
  md << "# Benchmark " << config.RunId() << "\n\n"
     << s.trials << " trials, master seed " << config.seed << ".\n\n"
     << "| planner | v nominal | runs | successes | feasible | median time (s) |\n"
     << "|---|---|---|---|---|---|\n";
  for (const PlannerStats& p : s.planners) {
    std::snprintf(line, sizeof(line), "| %s | %g | %d | %d | %d | %.3f |\n", ToString(p.planner),
                  p.v_nominal, p.runs, p.successes, p.feasible, p.median_time);
    md << line;
  }
  md << "\n";
  std::snprintf(line, sizeof(line), "- seed trajectories outside the thrust bounds at %g m/s: %d of %d\n",
                s.top_speed, s.seed_infeasible, s.seed_runs);
  md << line;
  std::snprintf(line, sizeof(line), "- toppquad slower than alpha-seed by over 1%%: %d of %d\n",
                s.slower_than_alpha_seed, s.mutual_alpha_seed);
  md << line;
  std::snprintf(line, sizeof(line), "- toppquad slower than alpha-topp-acc by over 1%%: %d of %d\n",
                s.slower_than_alpha_acc, s.mutual_alpha_acc);
  md << line;
  std::snprintf(line, sizeof(line), "- median improvement over alpha-seed: %.1f%%\n",
                100.0 * s.median_improvement_alpha_seed);
  md << line;
  std::snprintf(line, sizeof(line), "- converged toppquad solutions failing validation: %d of %d\n",
                s.converged_invalid, s.converged);
  md << line;
  std::snprintf(line, sizeof(line),
                "- bidirectional pairs: %d, slower by over 1 ms: %d, with negative thrust: %d\n",
                s.bidirectional_pairs, s.bidirectional_slower, s.bidirectional_negative);
  md << line;
  WriteFile(dir / "summary.md", md.str());
  return dir.string();
}

}  // namespace toppquad
