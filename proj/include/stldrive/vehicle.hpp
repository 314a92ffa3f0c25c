#pragma once

/**
 * @file
 * @brief Ego vehicle models: kinematic bicycle (planning model) and planar
 * two-track model with Pacejka tires (ground truth / monitoring model).
 */

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stldrive {

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a)
{
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

/// Kinematic state [x, y, psi, v] of the planning model.
struct SimpleState
{
  double x{0.0};
  double y{0.0};
  double psi{0.0};
  double v{0.0};

  Eigen::Vector4d vec() const { return {x, y, psi, v}; }
  static SimpleState from_vec(const Eigen::Vector4d & s) { return {s[0], s[1], s[2], s[3]}; }

  bool operator==(const SimpleState &) const = default;
};

/// Planar rigid-body state; velocities and yaw rate are body-frame.
struct DetailedState
{
  double x{0.0};
  double y{0.0};
  double vx_body{0.0};
  double vy_body{0.0};
  double psi{0.0};
  double psi_dot{0.0};

  double speed() const { return std::hypot(vx_body, vy_body); }

  /// Kinematic view used by the planner and the monitors.
  SimpleState simple() const { return {x, y, psi, speed()}; }

  static DetailedState from_simple(const SimpleState & s) { return {s.x, s.y, s.v, 0.0, s.psi, 0.0}; }

  bool operator==(const DetailedState &) const = default;
};

struct ControlInput
{
  double delta{0.0};  ///< steering angle [rad]
  double gamma{0.0};  ///< throttle (> 0) / brake (< 0), in [-1, 1]

  bool operator==(const ControlInput &) const = default;
};

struct VehicleParams
{
  double lf{2.11};
  double lr{1.59};
  double mass{1500.0};
  double yaw_inertia{2500.0};
  double a_max{3.0};
  double b_max{8.0};
  double delta_min{-0.61};
  double delta_max{0.61};
  double pacejka_b{10.0};
  double pacejka_c{1.9};
  double pacejka_d{0.9 * 1500.0 * 9.81 / 2.0};
  double bbox_length{4.22};
  double bbox_width{1.8};

  /// Throws std::invalid_argument naming the first offending field.
  void validate() const
  {
    auto positive = [](double v, const char * name) {
      if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string("vehicle_params.") + name + " must be > 0");
    };
    positive(lf, "lf");
    positive(lr, "lr");
    positive(mass, "mass");
    positive(yaw_inertia, "yaw_inertia");
    positive(a_max, "a_max");
    positive(b_max, "b_max");
    positive(pacejka_b, "pacejka_b");
    positive(pacejka_c, "pacejka_c");
    positive(pacejka_d, "pacejka_d");
    positive(bbox_length, "bbox_length");
    positive(bbox_width, "bbox_width");
    if (!(delta_min < 0.0)) throw std::invalid_argument("vehicle_params.delta_min must be < 0");
    if (!(delta_max > 0.0)) throw std::invalid_argument("vehicle_params.delta_max must be > 0");
  }

  ControlInput clamp(ControlInput u) const
  {
    return {std::clamp(u.delta, delta_min, delta_max), std::clamp(u.gamma, -1.0, 1.0)};
  }
};

/// Discrete affine model x+ = A x + B u + c around a nominal point.
struct LinearizedDynamics
{
  Eigen::Matrix4d a_mat;
  Eigen::Matrix<double, 4, 2> b_mat;
  Eigen::Vector4d c_vec;
  double dt{0.0};

  Eigen::Vector4d apply(const Eigen::Vector4d & x, const Eigen::Vector2d & u) const { return a_mat * x + b_mat * u + c_vec; }
};

/// Piecewise-affine throttle/brake map: gamma * a_max above zero, gamma * b_max below.
inline double throttle_to_accel(double gamma, const VehicleParams & p)
{
  if (!(gamma >= -1.0 && gamma <= 1.0)) throw std::domain_error("throttle_to_accel: gamma outside [-1, 1]");
  return gamma >= 0.0 ? gamma * p.a_max : gamma * p.b_max;
}

/// Slope of throttle_to_accel; the right derivative is used at gamma = 0.
inline double throttle_slope(double gamma, const VehicleParams & p) { return gamma >= 0.0 ? p.a_max : p.b_max; }

namespace detail {

/// One Euler step of the kinematic bicycle without heading normalization.
inline SimpleState kinematic_euler(const SimpleState & s, const ControlInput & u, double dt, const VehicleParams & p)
{
  const double a = throttle_to_accel(std::clamp(u.gamma, -1.0, 1.0), p);
  SimpleState n;
  n.x   = s.x + dt * s.v * std::cos(s.psi);
  n.y   = s.y + dt * s.v * std::sin(s.psi);
  n.psi = s.psi + dt * s.v / p.lf * std::tan(u.delta);
  n.v   = std::max(0.0, s.v + dt * a);
  return n;
}

}  // namespace detail

/// Forward-Euler step of the kinematic bicycle; speed clamped at zero, heading wrapped.
inline SimpleState simple_step(const SimpleState & s, const ControlInput & u, double dt, const VehicleParams & p)
{
  if (!(dt > 0.0)) throw std::invalid_argument("simple_step: dt must be > 0");
  SimpleState n = detail::kinematic_euler(s, u, dt, p);
  n.psi         = wrap_angle(n.psi);
  return n;
}

/**
 * @brief Jacobian linearization of the (unwrapped) kinematic Euler step.
 *
 * The affine offset is chosen so that the model reproduces the nonlinear step
 * exactly at the nominal point.
 */
inline LinearizedDynamics linearize_simple(const SimpleState & s, const ControlInput & u, double dt, const VehicleParams & p)
{
  if (!(dt > 0.0)) throw std::invalid_argument("linearize_simple: dt must be > 0");
  const double c = std::cos(s.psi), sn = std::sin(s.psi);
  const double tan_d = std::tan(u.delta);
  const double sec_d = 1.0 / std::cos(u.delta);

  LinearizedDynamics lin;
  lin.dt    = dt;
  lin.a_mat = Eigen::Matrix4d::Identity();
  lin.a_mat(0, 2) = -dt * s.v * sn;
  lin.a_mat(0, 3) = dt * c;
  lin.a_mat(1, 2) = dt * s.v * c;
  lin.a_mat(1, 3) = dt * sn;
  lin.a_mat(2, 3) = dt * tan_d / p.lf;

  lin.b_mat.setZero();
  lin.b_mat(2, 0) = dt * s.v / p.lf * sec_d * sec_d;
  lin.b_mat(3, 1) = dt * throttle_slope(u.gamma, p);

  const Eigen::Vector4d next = detail::kinematic_euler(s, u, dt, p).vec();
  lin.c_vec = next - lin.a_mat * s.vec() - lin.b_mat * Eigen::Vector2d(u.delta, u.gamma);
  return lin;
}

/// Pacejka magic formula, lateral component: d * sin(c * atan(b * alpha)).
inline double pacejka_lateral_force(double slip_angle, double b, double c, double d)
{
  return d * std::sin(c * std::atan(b * slip_angle));
}

namespace detail {

// Below this longitudinal speed the slip angles use a floored speed and the
// lateral states are blended towards the kinematic solution.
inline constexpr double kSlipSpeedFloor = 1.0;
inline constexpr double kBlendSpeed     = 2.0;
inline constexpr double kMaxSubstep     = 1e-3;

inline void two_track_substep(DetailedState & s, const ControlInput & u, double h, const VehicleParams & p)
{
  const double vx_eff = std::max(s.vx_body, kSlipSpeedFloor);
  const double alpha_f = u.delta - std::atan2(s.vy_body + p.lf * s.psi_dot, vx_eff);
  const double alpha_r = -std::atan2(s.vy_body - p.lr * s.psi_dot, vx_eff);
  const double fy_f = pacejka_lateral_force(alpha_f, p.pacejka_b, p.pacejka_c, p.pacejka_d);
  const double fy_r = pacejka_lateral_force(alpha_r, p.pacejka_b, p.pacejka_c, p.pacejka_d);

  // rear-wheel drive, brakes split evenly between axles
  const double f_long = p.mass * throttle_to_accel(std::clamp(u.gamma, -1.0, 1.0), p);
  const double fx_f = u.gamma >= 0.0 ? 0.0 : 0.5 * f_long;
  const double fx_r = u.gamma >= 0.0 ? f_long : 0.5 * f_long;

  const double cd = std::cos(u.delta), sd = std::sin(u.delta);
  const double fx = fx_r + fx_f * cd - fy_f * sd;
  const double fy = fy_r + fx_f * sd + fy_f * cd;
  const double mz = p.lf * (fy_f * cd + fx_f * sd) - p.lr * fy_r;

  const double vx_dot = fx / p.mass + s.psi_dot * s.vy_body;
  const double vy_dot = fy / p.mass - s.psi_dot * s.vx_body;
  const double r_dot  = mz / p.yaw_inertia;

  const double cpsi = std::cos(s.psi), spsi = std::sin(s.psi);
  s.x += h * (s.vx_body * cpsi - s.vy_body * spsi);
  s.y += h * (s.vx_body * spsi + s.vy_body * cpsi);
  s.psi += h * s.psi_dot;
  s.vx_body = std::max(0.0, s.vx_body + h * vx_dot);
  s.vy_body += h * vy_dot;
  s.psi_dot += h * r_dot;

  if (s.vx_body < kBlendSpeed) {
    const double w      = s.vx_body / kBlendSpeed;
    const double r_kin  = s.vx_body * std::tan(u.delta) / (p.lf + p.lr);
    const double vy_kin = r_kin * p.lr;
    s.vy_body = w * s.vy_body + (1.0 - w) * vy_kin;
    s.psi_dot = w * s.psi_dot + (1.0 - w) * r_kin;
  }
}

}  // namespace detail

/**
 * @brief Advances the two-track model by dt.
 *
 * Explicit Euler on fixed substeps of at most 1 ms; the tire dynamics are too
 * stiff for a single 0.1 s Euler step.
 */
inline DetailedState detailed_step(const DetailedState & s, const ControlInput & u, double dt, const VehicleParams & p)
{
  if (!(dt > 0.0)) throw std::invalid_argument("detailed_step: dt must be > 0");
  const int n      = std::max(1, static_cast<int>(std::ceil(dt / detail::kMaxSubstep - 1e-9)));
  const double h   = dt / n;
  DetailedState out = s;
  for (int i = 0; i < n; ++i) detail::two_track_substep(out, u, h, p);
  out.psi = wrap_angle(out.psi);
  return out;
}

inline SimpleState step(const SimpleState & s, const ControlInput & u, double dt, const VehicleParams & p)
{
  return simple_step(s, u, dt, p);
}

inline DetailedState step(const DetailedState & s, const ControlInput & u, double dt, const VehicleParams & p)
{
  return detailed_step(s, u, dt, p);
}

/// Rolls a model forward; returns controls.size() + 1 states starting with `initial`.
template<typename State>
std::vector<State> simulate_trajectory(const State & initial, std::span<const ControlInput> controls, double dt, const VehicleParams & p)
{
  if (controls.empty()) throw std::invalid_argument("simulate_trajectory: empty control sequence");
  std::vector<State> out;
  out.reserve(controls.size() + 1);
  out.push_back(initial);
  for (const auto & u : controls) out.push_back(step(out.back(), u, dt, p));
  return out;
}

}  // namespace stldrive
