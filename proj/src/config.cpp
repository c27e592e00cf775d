#include "toppquad/config.hpp"

#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "toppquad/errors.hpp"

namespace toppquad {

namespace {

class Reader {
 public:
  Reader(std::string origin, std::string base_dir)
      : origin_(std::move(origin)), base_dir_(std::move(base_dir)) {}

  [[noreturn]] void Fail(const std::string& key, const std::string& what) const {
    throw ConfigError(origin_ + ": " + key + ": " + what);
  }

  void Keys(const YAML::Node& map, const std::string& where,
            std::initializer_list<const char*> allowed) const {
    if (!map) return;
    if (!map.IsMap()) Fail(where.empty() ? "document" : where, "expected a map");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& kv : map) {
      const std::string k = kv.first.as<std::string>();
      if (!ok.count(k)) Fail(Join(where, k), "unknown key");
    }
  }

  template <typename T>
  void Get(const YAML::Node& map, const std::string& where, const char* key, T& out) const {
    const YAML::Node n = map[key];
    if (!n) return;
    try {
      out = n.as<T>();
    } catch (const YAML::Exception&) {
      Fail(Join(where, key), "cannot read value '" + Dump(n) + "'");
    }
  }

  Vec3 GetVec3(const YAML::Node& n, const std::string& key) const {
    const std::vector<double> v = Numbers(n, key);
    if (v.size() != 3) Fail(key, "expected 3 numbers");
    return Vec3(v[0], v[1], v[2]);
  }

  // A scalar is broadcast to all four motors.
  Vec4 GetVec4(const YAML::Node& n, const std::string& key) const {
    if (n.IsScalar()) return Vec4::Constant(Scalar(n, key));
    const std::vector<double> v = Numbers(n, key);
    if (v.size() != 4) Fail(key, "expected a number or 4 numbers");
    return Vec4(v[0], v[1], v[2], v[3]);
  }

  std::vector<double> Numbers(const YAML::Node& n, const std::string& key) const {
    if (!n.IsSequence()) Fail(key, "expected a list of numbers");
    std::vector<double> v;
    for (const auto& e : n) v.push_back(Scalar(e, key));
    return v;
  }

  double Scalar(const YAML::Node& n, const std::string& key) const {
    try {
      return n.as<double>();
    } catch (const YAML::Exception&) {
      Fail(key, "expected a number, got '" + Dump(n) + "'");
    }
  }

  std::string Path(const std::string& p) const {
    const std::filesystem::path path(p);
    return path.is_absolute() || base_dir_.empty() ? p : (std::filesystem::path(base_dir_) / path).string();
  }

  static std::string Join(const std::string& a, const std::string& b) {
    return a.empty() ? b : a + "." + b;
  }

 private:
  static std::string Dump(const YAML::Node& n) {
    std::ostringstream s;
    s << n;
    return s.str();
  }

  std::string origin_;
  std::string base_dir_;
};

QuadParams ReadVehicle(const Reader& r, const YAML::Node& v, const QuadParams& base) {
  if (!v) return base;
  r.Keys(v, "vehicle",
         {"mass", "inertia", "arm", "drag_ratio", "allocation", "u_min", "u_max", "gravity"});
  double mass = base.mass;
  r.Get(v, "vehicle", "mass", mass);
  Mat3 inertia = base.inertia;
  if (const YAML::Node n = v["inertia"]) {
    if (n.IsSequence() && n.size() == 3 && n[0].IsSequence()) {
      for (int i = 0; i < 3; ++i) inertia.row(i) = r.GetVec3(n[i], "vehicle.inertia").transpose();
    } else {
      inertia = r.GetVec3(n, "vehicle.inertia").asDiagonal();
    }
  }
  // Default arm matches the built-in vehicle.
  double arm = 0.046 / std::sqrt(2.0), drag = 0.006;
  r.Get(v, "vehicle", "arm", arm);
  r.Get(v, "vehicle", "drag_ratio", drag);
  Mat4 allocation = (v["arm"] || v["drag_ratio"]) ? XConfigAllocation(arm, drag) : base.allocation;
  if (const YAML::Node n = v["allocation"]) {
    if (!n.IsSequence() || n.size() != 4) r.Fail("vehicle.allocation", "expected 4 rows");
    for (int i = 0; i < 4; ++i) allocation.row(i) = r.GetVec4(n[i], "vehicle.allocation").transpose();
  }
  Vec4 u_min = base.u_min, u_max = base.u_max;
  if (v["u_min"]) u_min = r.GetVec4(v["u_min"], "vehicle.u_min");
  if (v["u_max"]) u_max = r.GetVec4(v["u_max"], "vehicle.u_max");
  Vec3 gravity = base.gravity;
  if (const YAML::Node n = v["gravity"])
    gravity = n.IsScalar() ? Vec3(0.0, 0.0, -r.Scalar(n, "vehicle.gravity")) : r.GetVec3(n, "vehicle.gravity");
  return QuadParams::Make(mass, inertia, allocation, u_min, u_max, gravity);
}

WaypointSet ReadWaypoints(const Reader& r, const YAML::Node& n) {
  if (!n.IsSequence()) r.Fail("waypoints", "expected a list of [x, y, z] or [x, y, z, yaw]");
  WaypointSet w;
  bool yaw = false;
  for (size_t i = 0; i < n.size(); ++i) {
    const std::string key = "waypoints[" + std::to_string(i) + "]";
    const std::vector<double> row = r.Numbers(n[i], key);
    if (row.size() != 3 && row.size() != 4) r.Fail(key, "expected 3 or 4 numbers");
    if (i == 0) yaw = row.size() == 4;
    if ((row.size() == 4) != yaw) r.Fail(key, "yaw given for some waypoints only");
    w.positions.emplace_back(row[0], row[1], row[2]);
    if (yaw) w.yaw.push_back(row[3]);
  }
  return w;
}

Config Parse(const YAML::Node& root, const std::string& origin, const std::string& base_dir) {
  const Reader r(origin, base_dir);
  Config c;
  if (!root || root.IsNull()) return c;
  r.Keys(root, "",
         {"vehicle", "seed", "planner", "waypoints", "waypoints_file", "topp", "solver", "alpha",
          "sample_dt", "rollout", "bench"});

  c.params = ReadVehicle(r, root["vehicle"], c.params);

  if (const YAML::Node s = root["seed"]) {
    r.Keys(s, "seed", {"order", "v_nominal"});
    std::string order = ToString(c.plan.order);
    r.Get(s, "seed", "order", order);
    c.plan.order = ParseSeedOrder(order);
    r.Get(s, "seed", "v_nominal", c.plan.v_nominal);
  }
  if (root["planner"]) {
    std::string name;
    r.Get(root, "", "planner", name);
    c.planner = ParsePlanner(name);
  }
  if (const YAML::Node t = root["topp"]) {
    r.Keys(t, "topp",
           {"n_grid", "v_max", "bidirectional", "boundary", "rate_weight", "failure_ratio",
            "h_floor", "lambda", "warm_start"});
    r.Get(t, "topp", "n_grid", c.plan.n_grid);
    if (const YAML::Node v = t["v_max"]) {
      if (v.IsNull() || (v.IsScalar() && v.Scalar() == "none"))
        c.plan.v_max.reset();
      else
        c.plan.v_max = r.Scalar(v, "topp.v_max");
    }
    r.Get(t, "topp", "bidirectional", c.plan.topp.bidirectional);
    std::string boundary = ToString(c.plan.topp.boundary);
    r.Get(t, "topp", "boundary", boundary);
    c.plan.topp.boundary = ParseBoundaryMode(boundary);
    r.Get(t, "topp", "rate_weight", c.plan.topp.rate_weight);
    r.Get(t, "topp", "failure_ratio", c.plan.topp.failure_ratio);
    r.Get(t, "topp", "h_floor", c.plan.topp.h_floor);
    r.Get(t, "topp", "lambda", c.plan.lambda);
    r.Get(t, "topp", "warm_start", c.plan.topp.warm_start);
  }

  if (const YAML::Node s = root["solver"]) {
    r.Keys(s, "solver",
           {"feas_tol", "opt_tol", "max_iterations", "mu_init", "bound_push", "verbose"});
    nlp::SolverOptions& o = c.plan.topp.solver;
    r.Get(s, "solver", "feas_tol", o.feas_tol);
    r.Get(s, "solver", "opt_tol", o.opt_tol);
    r.Get(s, "solver", "max_iterations", o.max_iterations);
    r.Get(s, "solver", "mu_init", o.mu_init);
    r.Get(s, "solver", "bound_push", o.bound_push);
    r.Get(s, "solver", "verbose", o.verbose);
  }
  if (const YAML::Node a = root["alpha"]) {
    r.Keys(a, "alpha", {"alpha_min", "tolerance", "margin", "samples"});
    r.Get(a, "alpha", "alpha_min", c.plan.alpha.alpha_min);
    r.Get(a, "alpha", "tolerance", c.plan.alpha.tolerance);
    r.Get(a, "alpha", "margin", c.plan.alpha.margin);
    r.Get(a, "alpha", "samples", c.plan.alpha.samples);
  }

  if (root["waypoints"] && root["waypoints_file"])
    r.Fail("waypoints_file", "give either waypoints or waypoints_file");
  if (const YAML::Node w = root["waypoints"]) c.waypoints = ReadWaypoints(r, w);
  if (root["waypoints_file"]) {
    std::string file;
    r.Get(root, "", "waypoints_file", file);
    c.waypoints = LoadWaypointsCsv(r.Path(file));
  }
  if (c.waypoints.size() > 0) {
    try {
      c.waypoints.Validate();
    } catch (const ConfigError& e) {
      r.Fail("waypoints", e.what());
    }
  }

  r.Get(root, "", "sample_dt", c.sample_dt);
  if (!(c.sample_dt > 0.0)) r.Fail("sample_dt", "must be positive");

  if (const YAML::Node ro = root["rollout"]) {
    r.Keys(ro, "rollout",
           {"sim_dt", "settle_window", "settle_position", "settle_velocity", "settle_hold",
            "divergence_factor", "gains"});
    r.Get(ro, "rollout", "sim_dt", c.rollout.sim_dt);
    r.Get(ro, "rollout", "settle_window", c.rollout.settle_window);
    r.Get(ro, "rollout", "settle_position", c.rollout.settle_position);
    r.Get(ro, "rollout", "settle_velocity", c.rollout.settle_velocity);
    r.Get(ro, "rollout", "settle_hold", c.rollout.settle_hold);
    r.Get(ro, "rollout", "divergence_factor", c.rollout.divergence_factor);
    if (const YAML::Node g = ro["gains"]) {
      r.Keys(g, "rollout.gains", {"kp", "kd", "kr", "kw"});
      if (g["kp"]) c.gains.kp = r.GetVec3(g["kp"], "rollout.gains.kp");
      if (g["kd"]) c.gains.kd = r.GetVec3(g["kd"], "rollout.gains.kd");
      if (g["kr"]) c.gains.kr = r.GetVec3(g["kr"], "rollout.gains.kr");
      if (g["kw"]) c.gains.kw = r.GetVec3(g["kw"], "rollout.gains.kw");
    }
  }

  if (const YAML::Node b = root["bench"]) {
    r.Keys(b, "bench",
           {"trials", "seed", "box", "waypoints", "planners", "v_nominal", "workers", "out",
            "run_id"});
    r.Get(b, "bench", "trials", c.bench.trials);
    r.Get(b, "bench", "seed", c.bench.seed);
    if (b["box"]) c.bench.box = r.GetVec3(b["box"], "bench.box");
    r.Get(b, "bench", "waypoints", c.bench.waypoints);
    if (const YAML::Node p = b["planners"]) {
      if (!p.IsSequence()) r.Fail("bench.planners", "expected a list of planner names");
      c.bench.planners.clear();
      for (const auto& e : p) {
        try {
          c.bench.planners.push_back(ParsePlanner(e.as<std::string>()));
        } catch (const ConfigError& err) {
          r.Fail("bench.planners", err.what());
        }
      }
    }
    if (b["v_nominal"]) c.bench.v_nominal = r.Numbers(b["v_nominal"], "bench.v_nominal");
    r.Get(b, "bench", "workers", c.bench.workers);
    r.Get(b, "bench", "out", c.bench.out);
    r.Get(b, "bench", "run_id", c.bench.run_id);
  }

  if (c.plan.topp.bidirectional && c.planner == Planner::kToppQuad)
    c.planner = Planner::kToppQuadBidirectional;
  c.plan.params = c.params;
  c.bench.plan = c.plan;
  c.plan.Validate();
  c.bench.Validate();
  c.gains.Validate();
  c.rollout.Validate();
  ToppOptions check = c.plan.topp;
  check.n = c.plan.n_grid;
  check.v_max = c.plan.v_max;
  check.Validate();
  return c;
}

// Prefixes errors raised below the reader with the origin.
Config ParseWithOrigin(const std::string& text, const std::string& origin,
                       const std::string& base_dir) {
  try {
    return Parse(YAML::Load(text), origin, base_dir);
  } catch (const YAML::Exception& e) {
    throw ConfigError(origin + ": " + e.what());
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.rfind(origin + ": ", 0) == 0) throw;
    throw ConfigError(origin + ": " + what);
  }
}

}  // namespace

Config ParseConfig(const std::string& text, const std::string& origin) {
  return ParseWithOrigin(text, origin, "");
}

Config LoadConfig(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open config file " + file);
  std::stringstream text;
  text << in.rdbuf();
  return ParseWithOrigin(text.str(), file, std::filesystem::path(file).parent_path().string());
}

QuadParams LoadQuadParams(const std::string& file) {
  return LoadConfig(file).params;
}

}  // namespace toppquad
