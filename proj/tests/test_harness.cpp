#include "stldrive/harness.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

namespace stldrive {
namespace {

const std::string kDir = STLDRIVE_SCENARIO_DIR;
const std::vector<std::string> kBundled{"comparison", "traffic_rules", "safety", "safety_mismatch", "scalability"};

const char * kMinimal = R"({
  "path": {"waypoints": [[0, 0], [60, 0]]},
  "ego": {"x": 0, "y": 0, "psi": 0, "v": 0}
})";

TEST(Scenario, MinimalFileFillsDefaults)
{
  const auto sc = parse_scenario(kMinimal);
  EXPECT_EQ(sc.max_steps, 600);
  EXPECT_EQ(sc.v_cruise, 10.0);
  EXPECT_EQ(sc.path.spacing, 1.0);
  EXPECT_EQ(sc.cfg.h, 10);
  EXPECT_EQ(sc.cfg.r_near, 10.0);
  EXPECT_EQ(sc.cfg.d_safe, 1.0);
  EXPECT_EQ(sc.cfg.r_ball, 0.3);
  EXPECT_EQ(sc.params.lf, VehicleParams{}.lf);
  EXPECT_TRUE(sc.vehicles.empty());
  EXPECT_EQ(sc.path.build().size(), 61u);
}

std::string error_of(const std::string & text)
{
  try {
    parse_scenario(text, "bad.json");
  } catch (const ScenarioError & e) {
    return e.what();
  }
  return "";
}

TEST(Scenario, ValidationNamesFieldAndLine)
{
  const std::string text = R"({
  "path": {"waypoints": [[0, 0], [60, 0]]},
  "ego": {"x": 0, "y": 0, "psi": 0, "v": 0},
  "features": [
    {"type": "speed_limit",
     "zone": [10, 20, -2, 2],
     "v_max": 0}
  ]
})";
  const auto msg = error_of(text);
  EXPECT_NE(msg.find("bad.json:7"), std::string::npos) << msg;
  EXPECT_NE(msg.find("/features/0/v_max"), std::string::npos) << msg;

  EXPECT_NE(error_of(R"({"path": {"waypoints": [[0, 0], [60, 0]]},
    "ego": {"x": 0, "y": 5, "psi": 0, "v": 0}})")
              .find("/ego"),
    std::string::npos);
  EXPECT_NE(error_of(R"({"path": {"waypoints": [[0, 0], [60, 0]]},
    "ego": {"x": 0, "y": 0, "psi": 0, "v": 0},
    "controller": {"h": 0}})")
              .find("/controller/h"),
    std::string::npos);
  EXPECT_NE(error_of(R"({"max_steps": 0, "path": {"waypoints": [[0, 0], [60, 0]]}, "ego": {"x": 0, "y": 0, "psi": 0, "v": 0}})").find("/max_steps"),
    std::string::npos);
  EXPECT_NE(error_of("{ not json").find("bad.json"), std::string::npos);
  EXPECT_NE(error_of(R"({"ego": {"x": 0, "y": 0, "psi": 0, "v": 0}})").find("/path"), std::string::npos);
}

TEST(Scenario, BundledFilesRoundTrip)
{
  for (const auto & name : kBundled) {
    const auto sc   = load_scenario(kDir + "/" + name + ".json");
    const json once = scenario_to_json(sc);
    const auto back = scenario_from_json(once);
    EXPECT_EQ(scenario_to_json(back), once) << name;
    EXPECT_EQ(back.vehicles.size(), sc.vehicles.size());
    EXPECT_EQ(back.features.size(), sc.features.size());
  }
}

TEST(Scenario, BundledShapes)
{
  EXPECT_EQ(load_scenario(kDir + "/safety.json").vehicles.size(), 160u);
  EXPECT_EQ(load_scenario(kDir + "/scalability.json").vehicles.size(), 121u);
  EXPECT_EQ(load_scenario(kDir + "/scalability.json").cfg.r_near, 40.0);
  EXPECT_EQ(load_scenario(kDir + "/safety_mismatch.json").cfg.model_throttle_scale, 1.3);
}

Scenario with_vehicles(std::vector<TrafficVehicle> vs)
{
  auto sc     = parse_scenario(kMinimal);
  sc.vehicles = std::move(vs);
  return sc;
}

TEST(StepWorld, StationaryWorldOnlyAdvancesTime)
{
  TrafficVehicle a{1, {10, 3.5, 0, 0}};
  a.behavior = Behavior::Stationary;
  TrafficVehicle b{2, {20, -3.5, 1.0, 0}};
  b.behavior   = Behavior::Stationary;
  const auto sc = with_vehicles({a, b});
  World w       = make_world(sc);
  const auto before = w;
  step_world(w, {}, 0.1);
  EXPECT_EQ(w.ego, before.ego);
  EXPECT_EQ(w.vehicles[0].state, before.vehicles[0].state);
  EXPECT_EQ(w.vehicles[1].state, before.vehicles[1].state);
  EXPECT_DOUBLE_EQ(w.time, 0.1);
  EXPECT_EQ(w.step, 1);
}

TEST(StepWorld, ConstantVelocityAdvancesOneMetrePerTick)
{
  TrafficVehicle a{1, {10, 3.5, 0, 10}};
  a.nominal_speed = 10;
  const auto sc   = with_vehicles({a});
  World w         = make_world(sc);
  for (int k = 1; k <= 5; ++k) {
    step_world(w, {}, 0.1);
    EXPECT_NEAR(w.vehicles[0].state.x, 10.0 + k, 1e-12);
    EXPECT_EQ(w.vehicles[0].state.y, 3.5);
  }
}

TEST(StepWorld, FollowerHaltsBehindStoppedCar)
{
  TrafficVehicle lead{1, {40, 3.5, 0, 0}};
  lead.behavior = Behavior::Stationary;
  TrafficVehicle follower{2, {10, 3.5, 0, 8}};
  follower.nominal_speed = 8;
  const auto sc          = with_vehicles({lead, follower});
  World w                = make_world(sc);
  double prev_x          = w.vehicles[1].state.x;
  for (int k = 0; k < 100; ++k) {
    step_world(w, {}, 0.1);
    const double gap = aabb_gap(w.vehicles[0].box(), w.vehicles[1].box());
    EXPECT_GE(gap, 0.0);
    EXPECT_FALSE(aabb_intersects(w.vehicles[0].box(), w.vehicles[1].box())) << k;
    EXPECT_GE(w.vehicles[1].state.x, prev_x);
    prev_x = w.vehicles[1].state.x;
  }
  EXPECT_EQ(w.vehicles[1].state.v, 0.0);
  EXPECT_GT(w.vehicles[1].state.x, 30.0);
}

TEST(StepWorld, FollowerResumesWhenClear)
{
  TrafficVehicle lead{1, {20, 0, 0, 0}};
  lead.behavior = Behavior::Scripted;
  lead.script   = {{0.0, {20, 0, 0, 0}}, {3.0, {20, 0, 0, 0}}, {4.0, {20, 20, 0, 0}}};
  TrafficVehicle follower{2, {8, 0, 0, 6}};
  follower.nominal_speed = 6;
  auto sc                = with_vehicles({lead, follower});
  sc.ego                 = {0, -30, 0, 0};
  sc.path.waypoints      = {{0, -30}, {60, -30}};
  World w                = make_world(sc);
  bool stopped = false;
  for (int k = 0; k < 60; ++k) {
    step_world(w, {}, 0.1);
    stopped = stopped || w.vehicles[1].state.v == 0.0;
  }
  EXPECT_TRUE(stopped);
  EXPECT_EQ(w.vehicles[1].state.v, 6.0);
  EXPECT_EQ(w.vehicles[0].state.y, 20.0);
}

TEST(StepWorld, LightPhasesAndStopSignRelease)
{
  auto sc = parse_scenario(R"({
    "path": {"waypoints": [[0, 0], [60, 0]]},
    "ego": {"x": 30, "y": 0, "psi": 0, "v": 0},
    "features": [
      {"type": "traffic_light", "zone": [40, 50, -2, 2], "stop_line": [50, 0],
       "phases": [{"color": "red", "duration": 0.3}, {"color": "green", "duration": 0.2}]},
      {"type": "stop_sign", "zone": [25, 35, -2, 2], "stop_line": [35, 0]}
    ]})");
  World w = make_world(sc);
  EXPECT_EQ(w.status[0].phase, LightColor::Red);
  std::vector<LightColor> seen;
  for (int k = 0; k < 5; ++k) {
    EXPECT_EQ(w.status[1].released, k >= kStopHoldSteps - 1) << k;
    step_world(w, {0, -1}, 0.1);
    seen.push_back(w.status[0].phase);
  }
  EXPECT_EQ(seen, (std::vector<LightColor>{LightColor::Red, LightColor::Red, LightColor::Green, LightColor::Green, LightColor::Red}));
  EXPECT_TRUE(w.status[1].released);
}

TEST(Run, EmptyRoadReachesGoal)
{
  auto sc      = parse_scenario(kMinimal);
  const auto r = run(sc);
  EXPECT_EQ(r.summary.termination, "goal");
  EXPECT_FALSE(r.summary.collision);
  const auto & last = r.trace.back();
  EXPECT_LE(std::hypot(last.simple.x - 60.0, last.simple.y), kGoalTolerance);
  for (std::size_t k = 0; k + 1 < r.trace.size(); ++k) {
    EXPECT_EQ(r.trace[k].source, "optimal");
    EXPECT_NEAR(r.trace[k + 1].time - r.trace[k].time, sc.cfg.dt, 1e-12);
    EXPECT_EQ(r.trace[k + 1].step, r.trace[k].step + 1);
  }
}

std::string trace_text(const RunResult & r)
{
  std::ostringstream os;
  write_trace_csv(r.trace, os);
  return os.str();
}

TEST(Run, SameSeedGivesIdenticalTrace)
{
  RunFlags flags;
  flags.max_steps = 60;
  const auto sc   = load_scenario(kDir + "/safety.json");
  EXPECT_EQ(trace_text(run(sc, flags)), trace_text(run(sc, flags)));
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path & file)
{
  std::ifstream in(file);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

// Recomputes the summary from the files on disk, independent of summarize().
TEST(Run, SummaryRecomputableFromLogs)
{
  RunFlags flags;
  flags.max_steps  = 120;
  const auto sc    = load_scenario(kDir + "/safety.json");
  const auto res   = run(sc, flags);
  const auto dir   = std::filesystem::temp_directory_path() / "stldrive_summary_test";
  write_outputs(res, dir);

  const auto trace = read_csv(dir / "trace.csv");
  ASSERT_GE(trace.size(), 2u);
  const auto & head = trace[0];
  auto col          = [&](const std::string & name) { return static_cast<std::size_t>(std::find(head.begin(), head.end(), name) - head.begin()); };
  double max_e = 0, sum_e = 0, min_gap = kInf;
  bool collision = false;
  int violations = 0;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const auto & r = trace[i];
    ASSERT_EQ(r.size(), head.size());
    const double e = std::stod(r[col("tracking_error")]);
    max_e          = std::max(max_e, e);
    sum_e += e;
    min_gap   = std::min(min_gap, std::stod(r[col("min_gap")]));
    collision = collision || r[col("collision")] == "1";
    if (r[col("source")] != "none" && r[col("monitor_pass")] == "0") ++violations;
  }
  std::vector<double> compute;
  const auto timing = read_csv(dir / "timing.csv");
  for (std::size_t i = 1; i < timing.size(); ++i) compute.push_back(std::stod(timing[i][1]) + std::stod(timing[i][2]));
  std::sort(compute.begin(), compute.end());
  const std::size_t m  = compute.size();
  const double median  = m % 2 ? compute[m / 2] : 0.5 * (compute[m / 2 - 1] + compute[m / 2]);

  std::ifstream sj(dir / "summary.json");
  const json s = json::parse(sj);
  EXPECT_EQ(s["steps"].get<int>(), static_cast<int>(trace.size() - 1));
  EXPECT_DOUBLE_EQ(s["max_tracking_error"].get<double>(), max_e);
  EXPECT_NEAR(s["mean_tracking_error"].get<double>(), sum_e / static_cast<double>(trace.size() - 1), 1e-12);
  EXPECT_DOUBLE_EQ(s["min_distance"].get<double>(), min_gap);
  EXPECT_EQ(s["collision"].get<bool>(), collision);
  EXPECT_EQ(s["rule_violations"].get<int>(), violations);
  EXPECT_NEAR(s["compute_median"].get<double>(), median, 1e-12);
  EXPECT_NEAR(s["fps_median"].get<double>(), 1.0 / median, 1e-9 / median);
  EXPECT_NEAR(s["fps_min"].get<double>(), 1.0 / compute.back(), 1e-9 / compute.back());
  std::filesystem::remove_all(dir);
}

TEST(Run, FlagsOverrideScenario)
{
  auto sc = parse_scenario(kMinimal);
  RunFlags flags;
  flags.max_steps = 7;
  flags.horizon   = 4;
  const auto r    = run(sc, flags);
  EXPECT_EQ(r.summary.termination, "max_steps");
  EXPECT_EQ(r.trace.size(), 7u);
}

}  // namespace
}  // namespace stldrive
