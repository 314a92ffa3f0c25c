#pragma once

/**
 * @brief World stepping, the closed loop and its logs.
 * @file
 */

#include "controller.hpp"
#include "scenario.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace stldrive {

/// Consecutive ticks at or below kStopSpeed inside a stop-sign zone that release the sign.
inline constexpr int kStopHoldSteps = 5;
/// Traffic vehicles stop when another box is this far ahead of their front bumper or closer.
inline constexpr double kCourtesyGap = 5.0;
inline constexpr double kGoalTolerance = 2.0;

struct World
{
  const Scenario * scenario{nullptr};
  ReferencePath path;
  double time{0.0};
  int step{0};
  DetailedState ego;
  std::vector<TrafficVehicle> vehicles;
  std::vector<FeatureStatus> status;
  std::vector<int> stop_hold;
  Plan prev_plan;
};

inline void refresh_status(World & w)
{
  const auto & fs = w.scenario->features;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    if (const auto * tl = std::get_if<TrafficLight>(&fs[i].kind)) w.status[i].phase = tl->phase_at(w.time);
    if (fs[i].is_stop_sign() && !w.status[i].released) {
      const auto s = w.ego.simple();
      if (fs[i].zone.contains(s.x, s.y) && s.v <= kStopSpeed) {
        if (++w.stop_hold[i] >= kStopHoldSteps) w.status[i].released = true;
      } else {
        w.stop_hold[i] = 0;
      }
    }
  }
}

inline World make_world(const Scenario & sc)
{
  World w;
  w.scenario = &sc;
  w.path     = sc.path.build();
  w.ego      = DetailedState::from_simple(sc.ego);
  w.vehicles = sc.vehicles;
  w.status.assign(sc.features.size(), FeatureStatus{});
  w.stop_hold.assign(sc.features.size(), 0);
  refresh_status(w);
  return w;
}

namespace detail {

/// Pose of a scripted vehicle at time t, interpolated between keyframes.
inline SimpleState scripted_state(const TrafficVehicle & v, double t)
{
  const auto & sc = v.script;
  if (t <= sc.front().t) return sc.front().state;
  if (t >= sc.back().t) return sc.back().state;
  std::size_t k = 1;
  while (sc[k].t < t) ++k;
  const auto & a = sc[k - 1];
  const auto & b = sc[k];
  const double w = (t - a.t) / (b.t - a.t);
  return {a.state.x + w * (b.state.x - a.state.x), a.state.y + w * (b.state.y - a.state.y), wrap_angle(a.state.psi + w * wrap_angle(b.state.psi - a.state.psi)),
    a.state.v + w * (b.state.v - a.state.v)};
}

inline Aabb probe_ahead(const TrafficVehicle & v)
{
  const double c = std::cos(v.state.psi), s = std::sin(v.state.psi);
  const double reach = 0.5 * v.bbox_length + 0.5 * kCourtesyGap;
  return aabb_of(v.state.x + reach * c, v.state.y + reach * s, v.state.psi, kCourtesyGap, v.bbox_width);
}

}  // namespace detail

/**
 * @brief Advances the world by dt under the ego input `applied`.
 *
 * The ego moves on the two-track model. Constant-velocity vehicles stop while
 * another box (ego included) is within kCourtesyGap ahead of them and resume
 * their nominal speed otherwise; scripted vehicles follow their keyframes.
 */
inline void step_world(World & w, const ControlInput & applied, double dt)
{
  const auto & params = w.scenario->params;
  const Aabb ego_box  = aabb_of(w.ego, params.bbox_length, params.bbox_width);
  std::vector<Aabb> boxes;
  boxes.reserve(w.vehicles.size());
  for (const auto & v : w.vehicles) boxes.push_back(v.box());

  static const VehicleParams kNominal{};
  std::vector<TrafficVehicle> next = w.vehicles;
  for (std::size_t i = 0; i < w.vehicles.size(); ++i) {
    const auto & v = w.vehicles[i];
    auto & n       = next[i];
    switch (v.behavior) {
    case Behavior::Stationary: break;
    case Behavior::Scripted: n.state = detail::scripted_state(v, w.time + dt); break;
    case Behavior::ConstantVelocity: {
      const Aabb probe = detail::probe_ahead(v);
      bool blocked     = aabb_intersects(probe, ego_box);
      for (std::size_t j = 0; j < boxes.size() && !blocked; ++j)
        if (j != i && aabb_intersects(probe, boxes[j])) blocked = true;
      n.state   = v.state;
      n.state.v = blocked ? 0.0 : v.nominal_speed;
      n.state   = simple_step(n.state, {0.0, 0.0}, dt, kNominal);
      break;
    }
    }
  }
  w.vehicles = std::move(next);
  w.ego      = detailed_step(w.ego, applied, dt, params);
  w.time     = (w.step + 1) * dt;
  ++w.step;
  refresh_status(w);
}

/// One controller tick on the current world; records the plan for the next tick.
inline ControllerOutput tick(World & w, const MpcConfig & cfg, std::mt19937_64 & rng)
{
  const auto & sc   = *w.scenario;
  const auto ego    = w.ego.simple();
  const auto t_hl   = std::chrono::steady_clock::now();
  const auto wp     = extract_desired_trajectory(w.path, ego, sc.features, w.status, cfg.h, cfg.dt, sc.v_cruise);
  const auto ids    = nearby_vehicles({ego.x, ego.y}, w.vehicles, cfg.r_near);
  const auto preds  = predict_trajectories(w.vehicles, ids, cfg.h, cfg.dt);
  const EnvSnapshot env{&w.path, sc.features, w.status, w.vehicles, sc.v_cruise};
  const RuleInputs in{&env, ego, &preds};
  const auto hl_rules = build_rules(in, cfg, sc.params, CollisionModel::OneNorm);
  auto hl             = high_level_step(ego, w.prev_plan, wp, hl_rules, cfg, sc.params);
  const double hl_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_hl).count();

  const auto t_ll     = std::chrono::steady_clock::now();
  const auto ll_rules = build_rules(in, cfg, sc.params, CollisionModel::Box);
  auto out            = low_level_step(w.ego, hl.plan, ll_rules, cfg, sc.params, rng);
  if (!hl.solved && out.source == Source::Optimal) out.source = Source::ReusedPrevious;
  out.diag.hl_solve_time = hl_time;
  out.diag.ll_time       = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_ll).count();
  out.diag.hl_status     = hl.status;
  out.diag.hl_nodes      = hl.nodes;
  out.diag.hl_binaries   = hl.binaries;
  if (out.diag.verdict.rules.empty()) {
    for (const auto & r : ll_rules) out.diag.verdict.rules.emplace_back(r.name, true);
  }
  w.prev_plan = hl.plan;
  return out;
}

// ---------------------------------------------------------------------------
// Run

struct TraceRecord
{
  int step{0};
  double time{0.0};
  DetailedState detailed;
  SimpleState simple;
  ControlInput applied;
  std::string source{"none"};
  int sample_tries{0};
  std::string hl_status{"none"};
  long hl_nodes{0};
  int hl_binaries{0};
  double hl_solve_time{0.0};
  double ll_time{0.0};
  double tracking_error{0.0};
  double speed{0.0};
  double min_gap{kInf};
  bool collision{false};
  bool monitor_pass{true};
  std::vector<std::string> active_rules;
  std::vector<std::string> light_phases;
};

struct RunSummary
{
  int steps{0};
  double max_tracking_error{0.0};
  double mean_tracking_error{0.0};
  double min_distance{kInf};
  bool collision{false};
  double fps_median{0.0};
  double fps_min{0.0};
  double compute_median{0.0};
  double compute_p95{0.0};
  double over_budget_fraction{0.0};
  int rule_violations{0};
  std::string termination{"max_steps"};
};

struct RunResult
{
  std::vector<TraceRecord> trace;
  RunSummary summary;
};

struct RunFlags
{
  std::uint64_t seed{0};
  bool seed_set{false};
  bool no_monitor{false};
  int horizon{0};
  int max_steps{0};
  bool realtime{false};
};

inline double quantile(std::vector<double> v, double q)
{
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo    = static_cast<std::size_t>(std::floor(pos));
  const auto hi    = std::min(v.size() - 1, lo + 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Summary statistics recomputed from the trace alone.
inline RunSummary summarize(const std::vector<TraceRecord> & trace, double budget = 0.1)
{
  RunSummary s;
  s.steps = static_cast<int>(trace.size());
  double sum = 0.0;
  std::vector<double> compute;
  for (const auto & r : trace) {
    s.max_tracking_error = std::max(s.max_tracking_error, r.tracking_error);
    sum += r.tracking_error;
    s.min_distance = std::min(s.min_distance, r.min_gap);
    s.collision    = s.collision || r.collision;
    if (r.source != "none") {
      compute.push_back(r.hl_solve_time + r.ll_time);
      if (!r.monitor_pass) ++s.rule_violations;
    }
  }
  s.mean_tracking_error = trace.empty() ? 0.0 : sum / static_cast<double>(trace.size());
  if (!compute.empty()) {
    s.compute_median = quantile(compute, 0.5);
    s.compute_p95    = quantile(compute, 0.95);
    s.fps_median     = 1.0 / s.compute_median;
    s.fps_min        = 1.0 / *std::max_element(compute.begin(), compute.end());
    s.over_budget_fraction =
      static_cast<double>(std::count_if(compute.begin(), compute.end(), [&](double c) { return c > budget; })) / static_cast<double>(compute.size());
  }
  return s;
}

/**
 * @brief Closed loop: tick, step the world, repeat until the goal, a collision or max_steps.
 *
 * Each record holds the state at its time and the input applied from it. The
 * final record of a run ending at the goal or in a collision carries no input.
 */
inline RunResult run(const Scenario & scenario, const RunFlags & flags = {})
{
  Scenario sc = scenario;
  if (flags.seed_set) sc.seed = flags.seed;
  if (flags.no_monitor) sc.cfg.monitor = false;
  if (flags.horizon > 0) sc.cfg.h = flags.horizon;
  if (flags.max_steps > 0) sc.max_steps = flags.max_steps;
  if (flags.realtime) sc.cfg.realtime = true;
  sc.cfg.validate();

  World w = make_world(sc);
  std::mt19937_64 rng(sc.seed);
  RunResult res;
  const auto & goal = w.path.points().back();
  const auto & p    = sc.params;

  for (int k = 0; k <= sc.max_steps; ++k) {
    TraceRecord r;
    r.step           = w.step;
    r.time           = w.time;
    r.detailed       = w.ego;
    r.simple         = w.ego.simple();
    r.tracking_error = tracking_error(w.path, r.simple);
    r.speed          = r.simple.v;
    const Aabb ego_box = aabb_of(w.ego, p.bbox_length, p.bbox_width);
    for (const auto & v : w.vehicles) {
      const Aabb b = v.box();
      r.min_gap    = std::min(r.min_gap, aabb_gap(ego_box, b));
      r.collision  = r.collision || aabb_intersects(ego_box, b);
    }
    for (std::size_t i = 0; i < sc.features.size(); ++i)
      if (sc.features[i].is_light()) r.light_phases.push_back(to_string(w.status[i].phase));

    const bool at_goal = std::hypot(r.simple.x - goal.x, r.simple.y - goal.y) <= kGoalTolerance;
    if (r.collision || at_goal || k == sc.max_steps) {
      res.summary.termination = r.collision ? "collision" : at_goal ? "goal" : "max_steps";
      if (r.collision || at_goal) res.trace.push_back(std::move(r));
      break;
    }

    const auto out  = tick(w, sc.cfg, rng);
    r.applied       = out.applied;
    r.source        = to_string(out.source);
    r.sample_tries  = out.sample_tries;
    r.hl_status     = to_string(out.diag.hl_status);
    r.hl_nodes      = out.diag.hl_nodes;
    r.hl_binaries   = out.diag.hl_binaries;
    r.hl_solve_time = out.diag.hl_solve_time;
    r.ll_time       = out.diag.ll_time;
    r.monitor_pass  = out.diag.verdict.pass;
    for (const auto & [name, ok] : out.diag.verdict.rules) r.active_rules.push_back(name);
    res.trace.push_back(std::move(r));
    step_world(w, out.applied, sc.cfg.dt);
  }
  const auto term = res.summary.termination;
  res.summary     = summarize(res.trace, sc.cfg.dt);
  res.summary.termination = term;
  return res;
}

// ---------------------------------------------------------------------------
// Logs

/// Column order of trace.csv.
inline const char * kTraceHeader =
  "step,time,x,y,psi,v,vx_body,vy_body,psi_dot,delta,gamma,source,sample_tries,hl_status,hl_nodes,hl_binaries,"
  "tracking_error,speed,min_gap,collision,monitor_pass,active_rules,light_phases";

inline std::string format_g17(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string join(const std::vector<std::string> & xs)
{
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ";" : "") + xs[i];
  return out;
}

inline void write_trace_csv(const std::vector<TraceRecord> & trace, std::ostream & os)
{
  os << kTraceHeader << "\n";
  for (const auto & r : trace) {
    const auto & d = r.detailed;
    os << r.step << ',' << format_g17(r.time) << ',' << format_g17(d.x) << ',' << format_g17(d.y) << ',' << format_g17(d.psi) << ',' << format_g17(r.simple.v) << ',' << format_g17(d.vx_body)
       << ',' << format_g17(d.vy_body) << ',' << format_g17(d.psi_dot) << ',' << format_g17(r.applied.delta) << ',' << format_g17(r.applied.gamma) << ',' << r.source << ','
       << r.sample_tries << ',' << r.hl_status << ',' << r.hl_nodes << ',' << r.hl_binaries << ',' << format_g17(r.tracking_error) << ',' << format_g17(r.speed)
       << ',' << format_g17(r.min_gap) << ',' << (r.collision ? 1 : 0) << ',' << (r.monitor_pass ? 1 : 0) << ',' << join(r.active_rules) << ','
       << join(r.light_phases) << "\n";
  }
}

inline void write_timing_csv(const std::vector<TraceRecord> & trace, std::ostream & os)
{
  os << "step,hl_solve_time,ll_time\n";
  for (const auto & r : trace)
    if (r.source != "none") os << r.step << ',' << format_g17(r.hl_solve_time) << ',' << format_g17(r.ll_time) << "\n";
}

inline json summary_json(const RunSummary & s)
{
  auto finite = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"steps", s.steps}, {"max_tracking_error", s.max_tracking_error}, {"mean_tracking_error", s.mean_tracking_error},
    {"min_distance", finite(s.min_distance)}, {"collision", s.collision}, {"fps_median", s.fps_median}, {"fps_min", s.fps_min},
    {"compute_median", s.compute_median}, {"compute_p95", s.compute_p95}, {"over_budget_fraction", s.over_budget_fraction},
    {"rule_violations", s.rule_violations}, {"termination", s.termination}};
}

inline void write_outputs(const RunResult & res, const std::filesystem::path & dir)
{
  std::filesystem::create_directories(dir);
  std::ofstream trace(dir / "trace.csv");
  write_trace_csv(res.trace, trace);
  std::ofstream timing(dir / "timing.csv");
  write_timing_csv(res.trace, timing);
  std::ofstream summary(dir / "summary.json");
  summary << summary_json(res.summary).dump(2) << "\n";
}

}  // namespace stldrive
