#pragma once

#include <string>

#include "toppquad/bench.hpp"
#include "toppquad/rollout.hpp"

namespace toppquad {

// Everything the command-line tool can be told, loaded from a YAML file.
// Every section and key is optional; missing values keep their defaults.
// The schema is documented in README.md and config/example.yaml.
struct Config {
  QuadParams params = QuadParams::CrazyFlie();
  PlanSettings plan;  // params copied from `params` on load
  // topp.bidirectional: true turns toppquad into toppquad-bi.
  Planner planner = Planner::kToppQuad;
  WaypointSet waypoints;
  double sample_dt = 0.01;
  ControllerGains gains;
  RolloutOptions rollout;
  BenchConfig bench;  // bench.plan mirrors `plan`
};

// Throws ConfigError naming the file and the offending key, IoError when the
// file cannot be read.
Config LoadConfig(const std::string& file);
Config ParseConfig(const std::string& text, const std::string& origin = "<string>");

// Vehicle section only, from a file holding a top-level `vehicle` map.
QuadParams LoadQuadParams(const std::string& file);

}  // namespace toppquad
