#pragma once

/**
 * @file
 * @brief Two-level controller: MIQP model predictive control on the kinematic
 * model, then a runtime check of the plan on the two-track model with r-ball
 * sampling and full braking as fallbacks.
 */

#include "environment.hpp"
#include "milc.hpp"
#include "miqp.hpp"
#include "stl.hpp"
#include "vehicle.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stldrive {

struct MpcWeights
{
  double w_u{1.0};
  double w_du{1.0};
  double w_track{1.0};
};

struct MpcConfig
{
  int h{10};
  double dt{0.1};
  double r_near{10.0};
  double d_safe{1.0};
  /// Sampling radius in normalized control coordinates (delta / delta_max, gamma).
  double r_ball{0.3};
  int n_samples{30};
  MpcWeights weights{};
  double big_m{1e4};
  /// Wall-clock budget of one MIQP solve; only enforced when `realtime` is set.
  double qp_budget{0.08};
  /// Branch-and-bound node budget; keeps runs reproducible.
  long max_nodes{60};
  bool realtime{false};
  bool monitor{true};
  /// Scales a_max and b_max of the planning model (1 = no mismatch).
  double model_throttle_scale{1.0};
  /// Heading trust region of the linearization around the nominal rollout [rad].
  double psi_trust{0.5};
  /// The planner keeps this far under each speed limit; the monitor checks the limit itself.
  double speed_margin{0.3};

  void validate() const
  {
    if (h < 1) throw std::invalid_argument("controller.h must be >= 1");
    if (!(dt > 0.0)) throw std::invalid_argument("controller.dt must be > 0");
    if (!(r_near > 0.0)) throw std::invalid_argument("controller.r_near must be > 0");
    if (!(d_safe > 0.0)) throw std::invalid_argument("controller.d_safe must be > 0");
    if (!(r_ball > 0.0)) throw std::invalid_argument("controller.r_ball must be > 0");
    if (n_samples < 1) throw std::invalid_argument("controller.n_samples must be >= 1");
    if (!(weights.w_u > 0.0) || !(weights.w_du > 0.0) || !(weights.w_track > 0.0))
      throw std::invalid_argument("controller.weights must be > 0");
    if (!(big_m > 0.0)) throw std::invalid_argument("controller.big_m must be > 0");
    if (!(qp_budget > 0.0)) throw std::invalid_argument("controller.qp_budget must be > 0");
    if (max_nodes < 0) throw std::invalid_argument("controller.max_nodes must be >= 0");
    if (!(model_throttle_scale > 0.0)) throw std::invalid_argument("controller.model_throttle_scale must be > 0");
    if (speed_margin < 0.0) throw std::invalid_argument("controller.speed_margin must be >= 0");
    if (!(psi_trust > 0.0)) throw std::invalid_argument("controller.psi_trust must be > 0");
  }
};

enum class Source { Optimal, Sampled, FullBrake, ReusedPrevious };

inline const char * to_string(Source s)
{
  switch (s) {
  case Source::Optimal: return "optimal";
  case Source::Sampled: return "sampled";
  case Source::FullBrake: return "full_brake";
  case Source::ReusedPrevious: return "reused_previous";
  }
  return "?";
}

using Plan = std::vector<ControlInput>;

struct Diagnostics
{
  double hl_solve_time{0.0};
  double ll_time{0.0};
  MiqpStatus hl_status{MiqpStatus::Infeasible};
  long hl_nodes{0};
  int hl_binaries{0};
  MonitorVerdict verdict;
};

struct ControllerOutput
{
  ControlInput applied;
  Plan plan;
  Source source{Source::Optimal};
  int sample_tries{0};
  Diagnostics diag;
};

/// What the controller sees of the world at one tick.
struct EnvSnapshot
{
  const ReferencePath * path{nullptr};
  std::span<const RoadFeature> features;
  std::span<const FeatureStatus> status;
  std::span<const TrafficVehicle> vehicles;
  double v_cruise{10.0};
};

/// Drops plan[0] and repeats the last input; an empty plan becomes h zero inputs.
inline Plan shift_plan(const Plan & plan, int h)
{
  Plan out;
  out.reserve(static_cast<std::size_t>(h));
  for (std::size_t k = 1; k < plan.size() && static_cast<int>(out.size()) < h; ++k) out.push_back(plan[k]);
  const ControlInput last = plan.empty() ? ControlInput{} : plan.back();
  while (static_cast<int>(out.size()) < h) out.push_back(last);
  return out;
}

// ---------------------------------------------------------------------------
// Rules

enum class CollisionModel { OneNorm, Box };

struct RuleInputs
{
  const EnvSnapshot * env{nullptr};
  SimpleState ego;
  /// Predicted other-vehicle states (h + 1 each) keyed by id.
  const std::map<int, std::vector<SimpleState>> * predictions{nullptr};
};

/// Distance to the stop position under which a held ego is asked to stand still.
inline constexpr double kSettleDistance = 0.5;

namespace detail {

/// Signed progress of `p` past `line` along `tangent`.
inline double progress_past(const Vec2 & tangent, const Vec2 & line, const Vec2 & p) { return tangent.dot(p - line); }

inline double aabb_distance(const Aabb & box, const Vec2 & p)
{
  const double dx = std::max({0.0, box.x_min - p.x(), p.x() - box.x_max});
  const double dy = std::max({0.0, box.y_min - p.y(), p.y() - box.y_max});
  return std::hypot(dx, dy);
}

}  // namespace detail

/**
 * @brief Rules that constrain the next h steps, named after their feature.
 *
 * Speed limits apply once their zone is within the distance covered over the
 * horizon. A stop sign that has not been released, and a red light, keep the
 * ego centre stop_margin behind the stop line while the line is ahead and a
 * stop is still possible; a stop sign additionally requires a full stop once
 * the ego is in its zone and slow enough to stop within the horizon. Within
 * kSettleDistance of its stop position a held ego that can stop in one step
 * must stand still.
 * Collision rules cover every predicted vehicle.
 *
 * The planning set (OneNorm) keeps a margin under each speed threshold so the
 * plan survives the detailed model; the monitored set (Box) uses the
 * thresholds themselves.
 */
inline ActiveRuleSet build_rules(const RuleInputs & in, const MpcConfig & cfg, const VehicleParams & params, CollisionModel model)
{
  const auto & env = *in.env;
  const int h      = cfg.h;
  const Vec2 ego(in.ego.x, in.ego.y);
  const double reach = in.ego.v * h * cfg.dt + 0.5 * params.a_max * std::pow(h * cfg.dt, 2) + params.bbox_length;
  ActiveRuleSet rules;

  for (std::size_t i = 0; i < env.features.size(); ++i) {
    const auto & f        = env.features[i];
    const FeatureStatus st = env.status.empty() ? FeatureStatus{} : env.status[i];
    const std::string tag = "[" + std::to_string(i) + "]";
    if (const auto * sl = std::get_if<SpeedLimit>(&f.kind)) {
      const double v_max = model == CollisionModel::OneNorm ? std::max(0.5 * sl->v_max, sl->v_max - cfg.speed_margin) : sl->v_max;
      if (detail::aabb_distance(f.zone, ego) <= reach) rules.push_back({"speed_limit" + tag, zoned_speed_limit_rule(v_max, f.zone, h)});
      continue;
    }
    if (!holds_ego(f, st) || env.path == nullptr) continue;
    const double s_line  = env.path->project(f.stop_line.x(), f.stop_line.y());
    const Vec2 tangent   = env.path->tangent(s_line);
    const double ahead   = -detail::progress_past(tangent, f.stop_line, ego);
    const double v       = in.ego.v;
    const double braking = v * v / (2.0 * params.b_max);
    if (ahead <= reach + f.stop_margin && ahead - braking >= f.stop_margin)
      rules.push_back({(f.is_light() ? "red_light" : "stop_line") + tag, stop_line_rule(tangent, f.stop_line, f.stop_margin, h)});
    if (ahead - f.stop_margin <= kSettleDistance && v <= params.b_max * cfg.dt)
      rules.push_back({"standstill" + tag, standstill_rule(h, model == CollisionModel::OneNorm ? 0.0 : kHoldSpeed)});
    if (f.is_stop_sign() && f.zone.contains(ego.x(), ego.y()) && v <= 0.5 * params.b_max * h * cfg.dt)
      rules.push_back({"stop_sign" + tag, stop_sign_rule(h, model == CollisionModel::OneNorm ? 0.5 * kStopSpeed : kStopSpeed)});
  }

  if (in.predictions) {
    for (const auto & [id, traj] : *in.predictions) {
      const std::string name = "collision[" + std::to_string(id) + "]";
      if (model == CollisionModel::OneNorm) {
        Collision1Norm p{id, {}, cfg.d_safe};
        for (const auto & s : traj) p.other.emplace_back(s.x, s.y);
        rules.push_back({name, collision_rule(std::move(p), h)});
      } else {
        const auto it = std::find_if(env.vehicles.begin(), env.vehicles.end(), [id](const TrafficVehicle & v) { return v.id == id; });
        CollisionAabb p{id, {}, params.bbox_length, params.bbox_width};
        for (const auto & s : traj) p.other.push_back(aabb_of(s, it->bbox_length, it->bbox_width));
        rules.push_back({name, collision_rule(std::move(p), h)});
      }
    }
  }
  return rules;
}

// ---------------------------------------------------------------------------
// High level

struct HighLevelResult
{
  Plan plan;
  bool solved{false};
  MiqpStatus status{MiqpStatus::Infeasible};
  long nodes{0};
  int binaries{0};
  double solve_time{0.0};
};

/**
 * @brief One MPC solve around the shifted previous plan.
 *
 * Decision variables are the states 0..h (state 0 fixed to `state`), the
 * steering angles and the throttle split into a positive and a negative part,
 * which keeps the piecewise throttle map exact. The x, y and heading rows use
 * the Jacobian linearization at the nominal rollout; the speed row is exact.
 * State bounds are the deviations reachable from the nominal under those rows,
 * with the heading held within psi_trust of its nominal.
 * Every rule is required to hold from step 1 on. On failure the shifted
 * previous plan is returned with solved = false.
 */
inline HighLevelResult high_level_step(const SimpleState & state,
  const Plan & prev_plan,
  std::span<const Waypoint> desired,
  const ActiveRuleSet & rules,
  const MpcConfig & cfg,
  const VehicleParams & params)
{
  const auto t0 = std::chrono::steady_clock::now();
  const int h   = cfg.h;
  if (static_cast<int>(desired.size()) != h + 1) throw std::invalid_argument("high_level_step: need h + 1 waypoints");

  VehicleParams model = params;
  model.a_max *= cfg.model_throttle_scale;
  model.b_max *= cfg.model_throttle_scale;

  const Plan nominal_u = shift_plan(prev_plan, h);
  std::vector<SimpleState> nominal{state};
  for (int k = 0; k < h; ++k) nominal.push_back(detail::kinematic_euler(nominal.back(), nominal_u[static_cast<std::size_t>(k)], cfg.dt, model));

  // Deviation radii around the nominal, propagated through the absolute linearized rows.
  std::vector<Eigen::Vector4d> radius(static_cast<std::size_t>(h) + 1, Eigen::Vector4d::Zero());
  std::vector<LinearizedDynamics> lins;
  for (int k = 0; k < h; ++k) {
    const auto u  = static_cast<std::size_t>(k);
    lins.push_back(linearize_simple(nominal[u], nominal_u[u], cfg.dt, model));
    const auto & lin = lins.back();
    const double t   = (k + 1) * cfg.dt;
    const double r_delta = std::max(params.delta_max - nominal_u[u].delta, nominal_u[u].delta - params.delta_min);
    const auto & n       = nominal[u + 1];
    Eigen::Vector4d r    = lin.a_mat.cwiseAbs() * radius[u];
    r[2] += std::abs(lin.b_mat(2, 0)) * r_delta;
    r[2] = std::min(r[2], cfg.psi_trust);
    r[3] = std::max(n.v - std::max(0.0, state.v - model.b_max * t), state.v + model.a_max * t - n.v);
    radius[u + 1] = r;
  }

  ConstraintSystem sys;
  std::vector<StateVars> steps(static_cast<std::size_t>(h) + 1);
  std::vector<double> nom_values;
  for (int k = 0; k <= h; ++k) {
    auto & sv      = steps[static_cast<std::size_t>(k)].idx;
    const auto & n = nominal[static_cast<std::size_t>(k)];
    const auto & r = radius[static_cast<std::size_t>(k)];
    const double slack = k == 0 ? 0.0 : 1e-6;
    sv[0] = sys.add_var(n.x - r[0] - slack, n.x + r[0] + slack, "x" + std::to_string(k));
    sv[1] = sys.add_var(n.y - r[1] - slack, n.y + r[1] + slack, "y" + std::to_string(k));
    sv[2] = sys.add_var(n.psi - r[2] - slack, n.psi + r[2] + slack, "psi" + std::to_string(k));
    sv[3] = sys.add_var(std::max(0.0, n.v - r[3] - slack), n.v + r[3] + slack, "v" + std::to_string(k));
    for (double v : {n.x, n.y, n.psi, n.v}) nom_values.push_back(v);
  }
  std::vector<VarRef> d(static_cast<std::size_t>(h)), gp(d.size()), gm(d.size());
  for (int k = 0; k < h; ++k) {
    const auto u = static_cast<std::size_t>(k);
    d[u]         = sys.add_var(params.delta_min, params.delta_max, "delta" + std::to_string(k));
    gp[u]        = sys.add_var(0.0, 1.0, "gpos" + std::to_string(k));
    gm[u]        = sys.add_var(-1.0, 0.0, "gneg" + std::to_string(k));
    const auto & nu = nominal_u[u];
    nom_values.push_back(nu.delta);
    nom_values.push_back(std::max(0.0, nu.gamma));
    nom_values.push_back(std::min(0.0, nu.gamma));
  }

  // dynamics
  for (int k = 0; k < h; ++k) {
    const auto u   = static_cast<std::size_t>(k);
    const auto & s = steps[u].idx;
    const auto & n = steps[u + 1].idx;
    const auto & lin = lins[u];
    for (int i = 0; i < 3; ++i) {
      std::vector<std::pair<VarRef, double>> row{{n[static_cast<std::size_t>(i)], 1.0}};
      for (int j = 0; j < 4; ++j)
        if (lin.a_mat(i, j) != 0.0) row.emplace_back(s[static_cast<std::size_t>(j)], -lin.a_mat(i, j));
      if (lin.b_mat(i, 0) != 0.0) row.emplace_back(d[u], -lin.b_mat(i, 0));
      sys.add_eq(std::move(row), lin.c_vec[i]);
    }
    sys.add_eq({{n[3], 1.0}, {s[3], -1.0}, {gp[u], -cfg.dt * model.a_max}, {gm[u], -cfg.dt * model.b_max}}, 0.0);
  }

  // cost
  const auto & w = cfg.weights;
  for (int k = 0; k < h; ++k) {
    const auto u = static_cast<std::size_t>(k);
    sys.add_squared_residual({{d[u], 1.0}}, 0.0, w.w_u);
    sys.add_squared_residual({{gp[u], 1.0}}, 0.0, w.w_u);
    sys.add_squared_residual({{gm[u], 1.0}}, 0.0, w.w_u);
    if (k > 0) {
      sys.add_squared_residual({{d[u], 1.0}, {d[u - 1], -1.0}}, 0.0, w.w_du);
      sys.add_squared_residual({{gp[u], 1.0}, {gm[u], 1.0}, {gp[u - 1], -1.0}, {gm[u - 1], -1.0}}, 0.0, w.w_du);
    }
  }
  for (int k = 1; k <= h; ++k) {
    const auto & s   = steps[static_cast<std::size_t>(k)].idx;
    const auto & wp  = desired[static_cast<std::size_t>(k)];
    const double psn = nominal[static_cast<std::size_t>(k)].psi;
    const double psi_des = psn + wrap_angle(wp.psi_des - psn);
    sys.add_squared_residual({{s[0], 1.0}}, wp.x_des, w.w_track);
    sys.add_squared_residual({{s[1], 1.0}}, wp.y_des, w.w_track);
    sys.add_squared_residual({{s[2], 1.0}}, psi_des, w.w_track);
    sys.add_squared_residual({{s[3], 1.0}}, wp.v_des, w.w_track);
  }

  MilcEncoder enc(sys, steps, cfg.big_m);
  for (const auto & r : rules) enc.encode_rule(r.formula, 1);

  MiqpOptions opt;
  opt.time_budget = cfg.realtime ? cfg.qp_budget : 0.0;
  opt.max_nodes   = cfg.max_nodes;
  if (sys.num_binaries() > 0) {
    Eigen::VectorXd xn = Eigen::VectorXd::Zero(sys.num_vars());
    for (std::size_t i = 0; i < nom_values.size(); ++i) xn[static_cast<Eigen::Index>(i)] = nom_values[i];
    opt.hint = enc.hints(xn);
  }
  const auto sol = solve_miqp(sys, opt);

  HighLevelResult out;
  out.status   = sol.status;
  out.nodes    = sol.nodes_explored;
  out.binaries = sys.num_binaries();
  out.solved   = sol.has_solution;
  if (sol.has_solution) {
    for (int k = 0; k < h; ++k) {
      const auto u = static_cast<std::size_t>(k);
      // throttle that reproduces the planned acceleration, even when both parts are nonzero
      const double accel = model.a_max * sol.x[gp[u]] + model.b_max * sol.x[gm[u]];
      const double gamma = accel >= 0.0 ? accel / model.a_max : accel / model.b_max;
      out.plan.push_back({std::clamp(sol.x[d[u]], params.delta_min, params.delta_max), std::clamp(gamma, -1.0, 1.0)});
    }
  } else {
    out.plan = nominal_u;
  }
  out.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// ---------------------------------------------------------------------------
// Low level

/// Uniform draw in [0, 1) from the top 53 bits; independent of the standard library's distributions.
inline double uniform01(std::mt19937_64 & rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform point in the disk of radius r around `u` in (delta / delta_max, gamma), clamped to the input bounds.
inline ControlInput sample_r_ball(const ControlInput & u, double r, const VehicleParams & params, std::mt19937_64 & rng)
{
  double a = 0.0, b = 0.0;
  do {
    a = 2.0 * uniform01(rng) - 1.0;
    b = 2.0 * uniform01(rng) - 1.0;
  } while (a * a + b * b > 1.0);
  const double scale = std::max(std::abs(params.delta_min), std::abs(params.delta_max));
  return {std::clamp(u.delta + r * a * scale, params.delta_min, params.delta_max), std::clamp(u.gamma + r * b, -1.0, 1.0)};
}

inline std::vector<SimpleState> simple_view(std::span<const DetailedState> states)
{
  std::vector<SimpleState> out;
  out.reserve(states.size());
  for (const auto & s : states) out.push_back(s.simple());
  return out;
}

/**
 * @brief Checks `plan` on the two-track model against `rules` (from step 1).
 *
 * A passing plan is applied as is. Otherwise up to n_samples perturbations of
 * plan[0] are tried in order, each with plan[1:] unchanged; the first that
 * passes is applied. If none passes the vehicle brakes fully, holding the
 * planned steering angle.
 */
inline ControllerOutput low_level_step(const DetailedState & state,
  const Plan & plan,
  const ActiveRuleSet & rules,
  const MpcConfig & cfg,
  const VehicleParams & params,
  std::mt19937_64 & rng)
{
  if (plan.empty()) throw std::invalid_argument("low_level_step: empty plan");
  const auto t0 = std::chrono::steady_clock::now();
  ControllerOutput out;
  out.plan    = plan;
  out.applied = plan.front();
  out.source  = Source::Optimal;

  auto check = [&](const Plan & p) {
    const auto traj = simulate_trajectory(state, std::span<const ControlInput>(p), cfg.dt, params);
    return monitor_trace(rules, simple_view(traj), 1);
  };

  if (cfg.monitor) {
    out.diag.verdict = check(plan);
    if (!out.diag.verdict.pass) {
      Plan cand = plan;
      bool found = false;
      for (int k = 1; k <= cfg.n_samples && !found; ++k) {
        cand.front() = sample_r_ball(plan.front(), cfg.r_ball, params, rng);
        out.sample_tries = k;
        if (check(cand).pass) found = true;
      }
      if (found) {
        out.source  = Source::Sampled;
        out.applied = cand.front();
        out.plan    = cand;
      } else {
        out.source  = Source::FullBrake;
        out.applied = {plan.front().delta, -1.0};
      }
    }
  }
  out.diag.ll_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace stldrive
