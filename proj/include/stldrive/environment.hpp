#pragma once

/**
 * @file
 * @brief Reference path, road features, traffic participants and the two
 * collision primitives (1-norm point clearance, axis-aligned boxes).
 */

#include "vehicle.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace stldrive {

using Vec2 = Eigen::Vector2d;

struct PathPoint
{
  double x{0.0};
  double y{0.0};
  double psi{0.0};
};

/**
 * @brief Untimed sequence of equally spaced path points.
 *
 * The point set is the only geometry; arc-length queries interpolate linearly
 * between consecutive points.
 */
class ReferencePath
{
public:
  ReferencePath() = default;

  /// Takes points that are already uniformly spaced (within 1%).
  explicit ReferencePath(std::vector<PathPoint> points) : points_(std::move(points))
  {
    if (points_.size() < 2) throw std::invalid_argument("ReferencePath: need at least 2 points");
    double total = 0.0;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (std::size_t i = 1; i < points_.size(); ++i) {
      const double d = std::hypot(points_[i].x - points_[i - 1].x, points_[i].y - points_[i - 1].y);
      total += d;
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
    spacing_ = total / static_cast<double>(points_.size() - 1);
    if (!(spacing_ > 0.0) || hi - lo > 0.01 * spacing_) throw std::invalid_argument("ReferencePath: points are not uniformly spaced");
  }

  /// Resamples a polyline at equal arc-length steps close to `spacing`; headings follow the chords.
  static ReferencePath from_polyline(std::span<const Vec2> poly, double spacing)
  {
    if (poly.size() < 2) throw std::invalid_argument("ReferencePath: polyline needs at least 2 vertices");
    if (!(spacing > 0.0)) throw std::invalid_argument("ReferencePath: spacing must be > 0");
    std::vector<double> cum(poly.size(), 0.0);
    for (std::size_t i = 1; i < poly.size(); ++i) cum[i] = cum[i - 1] + (poly[i] - poly[i - 1]).norm();
    const double length = cum.back();
    if (!(length > 0.0)) throw std::invalid_argument("ReferencePath: zero-length polyline");
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(length / spacing)));
    const double ds = length / static_cast<double>(n);

    std::vector<Vec2> pts;
    pts.reserve(n + 1);
    std::size_t seg = 1;
    for (std::size_t k = 0; k <= n; ++k) {
      const double s = std::min(length, ds * static_cast<double>(k));
      while (seg + 1 < poly.size() && cum[seg] < s) ++seg;
      const double len = cum[seg] - cum[seg - 1];
      const double w   = len > 0.0 ? (s - cum[seg - 1]) / len : 0.0;
      pts.push_back(poly[seg - 1] + w * (poly[seg] - poly[seg - 1]));
    }
    std::vector<PathPoint> out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Vec2 d = pts[std::min(i + 1, pts.size() - 1)] - pts[i == 0 ? 0 : i - 1];
      out[i]       = {pts[i].x(), pts[i].y(), std::atan2(d.y(), d.x())};
    }
    ReferencePath path;
    path.points_  = std::move(out);
    path.spacing_ = ds;
    return path;
  }

  const std::vector<PathPoint> & points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  double spacing() const { return spacing_; }
  double length() const { return spacing_ * static_cast<double>(points_.size() - 1); }

  std::size_t nearest_index(double x, double y) const
  {
    std::size_t best = 0;
    double best_d2   = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points_.size(); ++i) {
      const double dx = points_[i].x - x, dy = points_[i].y - y;
      const double d2 = dx * dx + dy * dy;
      if (d2 < best_d2) {
        best_d2 = d2;
        best    = i;
      }
    }
    return best;
  }

  /// Arc-length coordinate of the orthogonal projection onto the segments adjacent to the nearest point.
  double project(double x, double y) const
  {
    const std::size_t i = nearest_index(x, y);
    double best_s = spacing_ * static_cast<double>(i);
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t j : {i == 0 ? std::size_t{0} : i - 1, i}) {
      if (j + 1 >= points_.size()) continue;
      const Vec2 a(points_[j].x, points_[j].y), b(points_[j + 1].x, points_[j + 1].y);
      const Vec2 ab = b - a;
      const double w = std::clamp((Vec2(x, y) - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
      const double d2 = (a + w * ab - Vec2(x, y)).squaredNorm();
      if (d2 < best_d2) {
        best_d2 = d2;
        best_s  = spacing_ * (static_cast<double>(j) + w);
      }
    }
    return best_s;
  }

  /// Interpolated pose at arc length s (clamped to the path).
  PathPoint at(double s) const
  {
    s = std::clamp(s, 0.0, length());
    const double f = s / spacing_;
    const auto j   = std::min(points_.size() - 2, static_cast<std::size_t>(f));
    const double w = f - static_cast<double>(j);
    const auto & a = points_[j];
    const auto & b = points_[j + 1];
    return {a.x + w * (b.x - a.x), a.y + w * (b.y - a.y), wrap_angle(a.psi + w * wrap_angle(b.psi - a.psi))};
  }

  /// Unit tangent at arc length s.
  Vec2 tangent(double s) const
  {
    const double psi = at(s).psi;
    return {std::cos(psi), std::sin(psi)};
  }

private:
  std::vector<PathPoint> points_;
  double spacing_{0.0};
};

/// Distance from the ego position to the nearest path point.
inline double tracking_error(const ReferencePath & path, const SimpleState & s)
{
  const auto & p = path.points()[path.nearest_index(s.x, s.y)];
  return std::hypot(p.x - s.x, p.y - s.y);
}

struct Aabb
{
  double x_min{0.0};
  double x_max{0.0};
  double y_min{0.0};
  double y_max{0.0};

  bool contains(double x, double y) const { return x >= x_min && x <= x_max && y >= y_min && y <= y_max; }
  bool operator==(const Aabb &) const = default;
};

/// Axis-aligned envelope of a length x width rectangle centred at (x, y) with heading psi.
inline Aabb aabb_of(double x, double y, double psi, double length, double width)
{
  if (!(length > 0.0) || !(width > 0.0)) throw std::invalid_argument("aabb_of: dimensions must be > 0");
  const double c = std::abs(std::cos(psi)), s = std::abs(std::sin(psi));
  const double hx = 0.5 * (length * c + width * s);
  const double hy = 0.5 * (length * s + width * c);
  return {x - hx, x + hx, y - hy, y + hy};
}

inline Aabb aabb_of(const SimpleState & s, double length, double width) { return aabb_of(s.x, s.y, s.psi, length, width); }
inline Aabb aabb_of(const DetailedState & s, double length, double width) { return aabb_of(s.x, s.y, s.psi, length, width); }

/// Closed-box overlap test; touching boxes intersect.
inline bool aabb_intersects(const Aabb & a, const Aabb & b)
{
  return a.x_min <= b.x_max && b.x_min <= a.x_max && a.y_min <= b.y_max && b.y_min <= a.y_max;
}

/// Euclidean separation between two boxes; 0 when they intersect.
inline double aabb_gap(const Aabb & a, const Aabb & b)
{
  const double dx = std::max({0.0, a.x_min - b.x_max, b.x_min - a.x_max});
  const double dy = std::max({0.0, a.y_min - b.y_max, b.y_min - a.y_max});
  return std::hypot(dx, dy);
}

inline double one_norm_clearance(const Vec2 & ego, const Vec2 & other)
{
  return std::abs(ego.x() - other.x()) + std::abs(ego.y() - other.y());
}

// ---------------------------------------------------------------------------
// Road features

enum class LightColor { Red, Yellow, Green };

inline const char * to_string(LightColor c)
{
  switch (c) {
  case LightColor::Red: return "red";
  case LightColor::Yellow: return "yellow";
  case LightColor::Green: return "green";
  }
  return "?";
}

struct SpeedLimit
{
  double v_max{0.0};
};

struct StopSign
{
};

struct TrafficLight
{
  std::vector<std::pair<LightColor, double>> phases;  ///< (color, duration s), cycled
  double offset{0.0};                                 ///< time into the cycle at t = 0

  LightColor phase_at(double t) const
  {
    double cycle = 0.0;
    for (const auto & [c, d] : phases) cycle += d;
    double tau = std::fmod(t + offset, cycle);
    if (tau < 0.0) tau += cycle;
    for (const auto & [c, d] : phases) {
      if (tau < d) return c;
      tau -= d;
    }
    return phases.back().first;
  }
};

struct RoadFeature
{
  std::variant<SpeedLimit, StopSign, TrafficLight> kind;
  Aabb zone;
  Vec2 stop_line{Vec2::Zero()};
  /// Ego centre must stay this far behind the stop line while the feature holds it.
  double stop_margin{0.0};

  bool is_speed_limit() const { return std::holds_alternative<SpeedLimit>(kind); }
  bool is_stop_sign() const { return std::holds_alternative<StopSign>(kind); }
  bool is_light() const { return std::holds_alternative<TrafficLight>(kind); }

  void validate() const
  {
    if (zone.x_min > zone.x_max || zone.y_min > zone.y_max) throw std::invalid_argument("zone: min exceeds max");
    if (const auto * sl = std::get_if<SpeedLimit>(&kind); sl && !(sl->v_max > 0.0))
      throw std::invalid_argument("v_max must be > 0");
    if (const auto * tl = std::get_if<TrafficLight>(&kind)) {
      if (tl->phases.empty()) throw std::invalid_argument("phases must not be empty");
      for (const auto & [c, d] : tl->phases)
        if (!(d > 0.0)) throw std::invalid_argument("phase durations must be > 0");
    }
    if (stop_margin < 0.0) throw std::invalid_argument("stop_margin must be >= 0");
  }
};

/// Runtime state of a feature as seen by the ego at one tick.
struct FeatureStatus
{
  LightColor phase{LightColor::Green};  ///< traffic lights only
  bool released{false};                 ///< stop sign: full stop already completed
};

/// True when the feature currently asks the ego to hold behind its stop line.
inline bool holds_ego(const RoadFeature & f, const FeatureStatus & st)
{
  if (f.is_stop_sign()) return !st.released;
  if (f.is_light()) return st.phase == LightColor::Red;
  return false;
}

struct Waypoint
{
  double x_des{0.0};
  double y_des{0.0};
  double psi_des{0.0};
  double v_des{0.0};
};

namespace detail {

struct HoldProfile
{
  double s_entry;  ///< first path arc inside the zone
  double s_stop;   ///< arc where the desired speed reaches 0
  double s_line;
};

inline std::optional<HoldProfile> hold_profile(const ReferencePath & path, const RoadFeature & f)
{
  const double s_line = path.project(f.stop_line.x(), f.stop_line.y());
  const double s_stop = std::max(0.0, s_line - f.stop_margin);
  for (std::size_t i = 0; i < path.size(); ++i) {
    const double s = path.spacing() * static_cast<double>(i);
    if (s > s_line) break;
    if (f.zone.contains(path.points()[i].x, path.points()[i].y)) return HoldProfile{std::min(s, s_stop), s_stop, s_line};
  }
  return std::nullopt;
}

}  // namespace detail

/**
 * @brief Desired trajectory of h + 1 waypoints along the path.
 *
 * Starts at the projection of the ego onto the path and advances by
 * v_des * dt per step. Speed limits cap v_des inside their zone; a held stop
 * sign or red light ramps v_des linearly (in arc length) from the zone entry to
 * zero at the stop position.
 */
inline std::vector<Waypoint> extract_desired_trajectory(const ReferencePath & path,
  const SimpleState & state,
  std::span<const RoadFeature> features,
  std::span<const FeatureStatus> status,
  int h,
  double dt,
  double v_cruise)
{
  if (path.size() < 2) throw std::invalid_argument("extract_desired_trajectory: empty path");
  if (h < 1) throw std::invalid_argument("extract_desired_trajectory: h must be >= 1");
  if (!status.empty() && status.size() != features.size()) throw std::invalid_argument("extract_desired_trajectory: status size mismatch");

  std::vector<std::optional<detail::HoldProfile>> holds(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const FeatureStatus st = status.empty() ? FeatureStatus{} : status[i];
    if (holds_ego(features[i], st)) holds[i] = detail::hold_profile(path, features[i]);
  }

  auto desired_speed = [&](double s, const PathPoint & p) {
    double v = v_cruise;
    for (std::size_t i = 0; i < features.size(); ++i) {
      const auto & f = features[i];
      if (const auto * sl = std::get_if<SpeedLimit>(&f.kind); sl && f.zone.contains(p.x, p.y)) v = std::min(v, sl->v_max);
    }
    for (std::size_t i = 0; i < features.size(); ++i) {
      if (!holds[i]) continue;
      const auto & hp = *holds[i];
      if (s < hp.s_entry || s > hp.s_line) continue;
      const double ramp = hp.s_stop - hp.s_entry;
      const double frac = ramp > 0.0 ? std::clamp((hp.s_stop - s) / ramp, 0.0, 1.0) : 0.0;
      v = std::min(v, v * frac);
    }
    return std::max(0.0, v);
  };

  std::vector<Waypoint> out;
  out.reserve(static_cast<std::size_t>(h) + 1);
  double s = std::clamp(path.project(state.x, state.y), 0.0, path.length());
  for (int k = 0; k <= h; ++k) {
    const PathPoint p = path.at(s);
    const double v    = desired_speed(s, p);
    out.push_back({p.x, p.y, p.psi, v});
    s = std::min(path.length(), s + v * dt);
  }
  return out;
}

inline std::vector<Waypoint> extract_desired_trajectory(
  const ReferencePath & path, const SimpleState & state, std::span<const RoadFeature> features, int h, double dt, double v_cruise)
{
  return extract_desired_trajectory(path, state, features, {}, h, dt, v_cruise);
}

// ---------------------------------------------------------------------------
// Traffic participants

enum class Behavior { ConstantVelocity, Scripted, Stationary };

/// Keyframe of a scripted vehicle; poses are interpolated linearly in time.
struct ScriptKey
{
  double t{0.0};
  SimpleState state;
};

struct TrafficVehicle
{
  int id{0};
  SimpleState state;
  double bbox_length{4.22};
  double bbox_width{1.8};
  Behavior behavior{Behavior::ConstantVelocity};
  std::vector<ScriptKey> script;
  /// Cruise speed restored after a courtesy stop.
  double nominal_speed{0.0};

  Aabb box() const { return aabb_of(state, bbox_length, bbox_width); }
};

/// Ids of vehicles whose centre lies within r_near of the ego (inclusive), ascending.
inline std::vector<int> nearby_vehicles(const Vec2 & ego, std::span<const TrafficVehicle> vehicles, double r_near)
{
  if (!(r_near > 0.0)) throw std::invalid_argument("nearby_vehicles: r_near must be > 0");
  std::vector<int> ids;
  for (const auto & v : vehicles)
    if (std::hypot(v.state.x - ego.x(), v.state.y - ego.y()) <= r_near) ids.push_back(v.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// Constant speed and heading rollouts (h + 1 states each) for the selected vehicles.
inline std::map<int, std::vector<SimpleState>> predict_trajectories(
  std::span<const TrafficVehicle> vehicles, std::span<const int> ids, int h, double dt)
{
  static const VehicleParams kNominal{};
  std::map<int, std::vector<SimpleState>> out;
  for (int id : ids) {
    const auto it = std::find_if(vehicles.begin(), vehicles.end(), [id](const TrafficVehicle & v) { return v.id == id; });
    if (it == vehicles.end()) throw std::out_of_range("predict_trajectories: unknown vehicle id " + std::to_string(id));
    std::vector<SimpleState> traj;
    traj.reserve(static_cast<std::size_t>(h) + 1);
    traj.push_back(it->state);
    for (int k = 0; k < h; ++k) traj.push_back(simple_step(traj.back(), {0.0, 0.0}, dt, kNominal));
    out.emplace(id, std::move(traj));
  }
  return out;
}

}  // namespace stldrive
