#pragma once

/**
 * @file
 * @brief Scenario description and its JSON form.
 *
 * Top-level sections: name, seed, max_steps, v_cruise, path, ego, vehicles,
 * features, controller, vehicle_params. Only path and ego are required.
 * Validation failures name the offending JSON pointer and, when the file text
 * is available, its line.
 */

#include "controller.hpp"
#include "environment.hpp"
#include "vehicle.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace stldrive {

using nlohmann::json;

struct ScenarioError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

struct PathSegment
{
  enum class Type { Straight, Arc } type{Type::Straight};
  double length{0.0};  ///< straight only
  double radius{0.0};  ///< arc only
  double angle{0.0};   ///< arc only; positive turns left
};

/// Either a waypoint polyline or a chain of straight / constant-curvature segments.
struct PathSpec
{
  double spacing{1.0};
  std::vector<Vec2> waypoints;
  Vec2 start{Vec2::Zero()};
  double heading{0.0};
  std::vector<PathSegment> segments;

  ReferencePath build() const
  {
    if (segments.empty()) return ReferencePath::from_polyline(waypoints, spacing);
    std::vector<Vec2> poly{start};
    double psi = heading;
    for (const auto & seg : segments) {
      if (seg.type == PathSegment::Type::Straight) {
        poly.push_back(poly.back() + seg.length * Vec2(std::cos(psi), std::sin(psi)));
        continue;
      }
      const double sign = seg.angle >= 0.0 ? 1.0 : -1.0;
      const Vec2 centre = poly.back() + sign * seg.radius * Vec2(-std::sin(psi), std::cos(psi));
      const int n       = std::max(2, static_cast<int>(std::ceil(std::abs(seg.angle) * seg.radius / 0.1)));
      const double phi0 = psi - sign * std::numbers::pi / 2;
      for (int i = 1; i <= n; ++i) {
        const double phi = phi0 + seg.angle * i / n;
        poly.push_back(centre + seg.radius * Vec2(std::cos(phi), std::sin(phi)));
      }
      psi += seg.angle;
    }
    return ReferencePath::from_polyline(poly, spacing);
  }
};

struct Scenario
{
  std::string name{"scenario"};
  std::uint64_t seed{0};
  int max_steps{600};
  double v_cruise{10.0};
  PathSpec path;
  SimpleState ego;
  std::vector<TrafficVehicle> vehicles;
  std::vector<RoadFeature> features;
  MpcConfig cfg;
  VehicleParams params;
};

// ---------------------------------------------------------------------------
// Line lookup

namespace detail {

/// Line (1-based) where the value addressed by `pointer` starts in `text`; 0 if not found.
inline int line_of(const std::string & text, const json::json_pointer & pointer)
{
  const std::string target = pointer.to_string();
  struct Frame
  {
    bool array;
    int index;
    std::string key;
  };
  std::vector<Frame> stack;
  std::string pending_key;
  int line = 1;
  auto current = [&]() {
    std::string p;
    for (const auto & f : stack) {
      std::string tok = f.array ? std::to_string(f.index) : f.key;
      for (std::size_t at = 0; (at = tok.find('~', at)) != std::string::npos; at += 2) tok.replace(at, 1, "~0");
      for (std::size_t at = 0; (at = tok.find('/', at)) != std::string::npos; at += 2) tok.replace(at, 1, "~1");
      p += "/" + tok;
    }
    return p;
  };
  auto value_start = [&]() -> bool {
    if (stack.empty()) return target.empty();
    auto & top = stack.back();
    if (!top.array) top.key = pending_key;
    return current() == target;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') {
      ++line;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',' || c == ':') {
      if (c == ',' && !stack.empty() && stack.back().array) ++stack.back().index;
      continue;
    }
    if (c == '}' || c == ']') {
      if (!stack.empty()) stack.pop_back();
      continue;
    }
    if (c == '"') {
      std::string s;
      std::size_t j = i + 1;
      for (; j < text.size() && text[j] != '"'; ++j) {
        if (text[j] == '\\' && j + 1 < text.size()) ++j;
        s += text[j];
      }
      // a string followed by ':' is a key
      std::size_t k = j + 1;
      while (k < text.size() && std::isspace(static_cast<unsigned char>(text[k]))) ++k;
      const bool is_key = k < text.size() && text[k] == ':' && !stack.empty() && !stack.back().array;
      if (is_key) {
        pending_key = s;
        line += static_cast<int>(std::count(text.begin() + static_cast<std::ptrdiff_t>(j), text.begin() + static_cast<std::ptrdiff_t>(k), '\n'));
        i = k;
        continue;
      }
      if (value_start()) return line;
      i = j;
      continue;
    }
    if (value_start()) return line;
    if (c == '{' || c == '[') {
      stack.push_back({c == '[', 0, {}});
      continue;
    }
    while (i + 1 < text.size() && std::string(",]}\n \t\r").find(text[i + 1]) == std::string::npos) ++i;
  }
  return 0;
}

class Reader
{
public:
  Reader(const json & root, std::string text, std::string origin) : root_(root), text_(std::move(text)), origin_(std::move(origin)) {}

  [[noreturn]] void fail(const json::json_pointer & at, const std::string & msg) const
  {
    std::string where = origin_;
    // a missing member is reported at the line of its closest existing parent
    int line = 0;
    for (auto p = at; !text_.empty() && line == 0; p = p.parent_pointer()) {
      line = line_of(text_, p);
      if (p.empty()) break;
    }
    if (line > 0) where += ":" + std::to_string(line);
    throw ScenarioError(where + ": " + (at.empty() ? std::string("/") : at.to_string()) + ": " + msg);
  }

  const json & at(const json::json_pointer & p) const { return root_.at(p); }
  bool has(const json::json_pointer & p) const { return root_.contains(p); }

  double number(const json::json_pointer & p, double fallback) const
  {
    if (!has(p)) return fallback;
    const auto & v = at(p);
    if (!v.is_number()) fail(p, "expected a number");
    return v.get<double>();
  }
  double number(const json::json_pointer & p) const
  {
    if (!has(p)) fail(p, "missing required number");
    return number(p, 0.0);
  }
  long integer(const json::json_pointer & p, long fallback) const
  {
    if (!has(p)) return fallback;
    const auto & v = at(p);
    if (!v.is_number_integer()) fail(p, "expected an integer");
    return v.get<long>();
  }
  bool boolean(const json::json_pointer & p, bool fallback) const
  {
    if (!has(p)) return fallback;
    if (!at(p).is_boolean()) fail(p, "expected true or false");
    return at(p).get<bool>();
  }
  std::string string(const json::json_pointer & p, const std::string & fallback) const
  {
    if (!has(p)) return fallback;
    if (!at(p).is_string()) fail(p, "expected a string");
    return at(p).get<std::string>();
  }
  std::size_t array_size(const json::json_pointer & p) const
  {
    if (!has(p)) return 0;
    if (!at(p).is_array()) fail(p, "expected an array");
    return at(p).size();
  }
  Vec2 point(const json::json_pointer & p) const
  {
    if (!has(p)) fail(p, "missing point");
    const auto & v = at(p);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) fail(p, "expected [x, y]");
    return {v[0].get<double>(), v[1].get<double>()};
  }
  Aabb box(const json::json_pointer & p) const
  {
    if (!has(p)) fail(p, "missing zone");
    const auto & v = at(p);
    if (!v.is_array() || v.size() != 4) fail(p, "expected [x_min, x_max, y_min, y_max]");
    for (const auto & e : v)
      if (!e.is_number()) fail(p, "expected [x_min, x_max, y_min, y_max]");
    Aabb b{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
    if (b.x_min > b.x_max || b.y_min > b.y_max) fail(p, "zone min exceeds max");
    return b;
  }

private:
  const json & root_;
  std::string text_;
  std::string origin_;
};

inline json::json_pointer ptr(const std::string & s) { return json::json_pointer(s); }

inline SimpleState read_state(const Reader & r, const std::string & base)
{
  return {r.number(ptr(base + "/x")), r.number(ptr(base + "/y")), r.number(ptr(base + "/psi"), 0.0), r.number(ptr(base + "/v"), 0.0)};
}

inline json state_json(const SimpleState & s) { return {{"x", s.x}, {"y", s.y}, {"psi", s.psi}, {"v", s.v}}; }

inline LightColor parse_color(const Reader & r, const json::json_pointer & p)
{
  const auto s = r.string(p, "");
  if (s == "red") return LightColor::Red;
  if (s == "yellow") return LightColor::Yellow;
  if (s == "green") return LightColor::Green;
  r.fail(p, "unknown light color '" + s + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parse / serialize

inline Scenario scenario_from_json(const json & root, const std::string & text = {}, const std::string & origin = "<scenario>")
{
  using detail::ptr;
  const detail::Reader r(root, text, origin);
  if (!root.is_object()) r.fail(ptr(""), "expected an object");
  Scenario sc;
  sc.name      = r.string(ptr("/name"), sc.name);
  sc.seed      = static_cast<std::uint64_t>(r.integer(ptr("/seed"), 0));
  sc.max_steps = static_cast<int>(r.integer(ptr("/max_steps"), sc.max_steps));
  if (sc.max_steps < 1) r.fail(ptr("/max_steps"), "must be >= 1");
  sc.v_cruise = r.number(ptr("/v_cruise"), sc.v_cruise);
  if (!(sc.v_cruise > 0.0)) r.fail(ptr("/v_cruise"), "must be > 0");

  // vehicle parameters first: other sections validate against them
  auto & vp = sc.params;
  const std::string pp = "/vehicle_params";
  vp.lf          = r.number(ptr(pp + "/lf"), vp.lf);
  vp.lr          = r.number(ptr(pp + "/lr"), vp.lr);
  vp.mass        = r.number(ptr(pp + "/mass"), vp.mass);
  vp.yaw_inertia = r.number(ptr(pp + "/yaw_inertia"), vp.yaw_inertia);
  vp.a_max       = r.number(ptr(pp + "/a_max"), vp.a_max);
  vp.b_max       = r.number(ptr(pp + "/b_max"), vp.b_max);
  vp.delta_min   = r.number(ptr(pp + "/delta_min"), vp.delta_min);
  vp.delta_max   = r.number(ptr(pp + "/delta_max"), vp.delta_max);
  vp.pacejka_b   = r.number(ptr(pp + "/pacejka_b"), vp.pacejka_b);
  vp.pacejka_c   = r.number(ptr(pp + "/pacejka_c"), vp.pacejka_c);
  vp.pacejka_d   = r.number(ptr(pp + "/pacejka_d"), vp.pacejka_d);
  vp.bbox_length = r.number(ptr(pp + "/bbox_length"), vp.bbox_length);
  vp.bbox_width  = r.number(ptr(pp + "/bbox_width"), vp.bbox_width);
  try {
    vp.validate();
  } catch (const std::invalid_argument & e) {
    r.fail(ptr(pp), e.what());
  }

  // path
  if (!r.has(ptr("/path"))) r.fail(ptr("/path"), "missing required section");
  sc.path.spacing = r.number(ptr("/path/spacing"), 1.0);
  if (!(sc.path.spacing > 0.0)) r.fail(ptr("/path/spacing"), "must be > 0");
  for (std::size_t i = 0; i < r.array_size(ptr("/path/waypoints")); ++i) sc.path.waypoints.push_back(r.point(ptr("/path/waypoints/" + std::to_string(i))));
  if (r.has(ptr("/path/start"))) sc.path.start = r.point(ptr("/path/start"));
  sc.path.heading = r.number(ptr("/path/heading"), 0.0);
  for (std::size_t i = 0; i < r.array_size(ptr("/path/segments")); ++i) {
    const std::string b = "/path/segments/" + std::to_string(i);
    const auto type     = r.string(ptr(b + "/type"), "");
    PathSegment seg;
    if (type == "straight") {
      seg.length = r.number(ptr(b + "/length"));
      if (!(seg.length > 0.0)) r.fail(ptr(b + "/length"), "must be > 0");
    } else if (type == "arc") {
      seg.type   = PathSegment::Type::Arc;
      seg.radius = r.number(ptr(b + "/radius"));
      seg.angle  = r.number(ptr(b + "/angle"));
      if (!(seg.radius > 0.0)) r.fail(ptr(b + "/radius"), "must be > 0");
      if (seg.angle == 0.0) r.fail(ptr(b + "/angle"), "must be nonzero");
    } else {
      r.fail(ptr(b + "/type"), "expected \"straight\" or \"arc\"");
    }
    sc.path.segments.push_back(seg);
  }
  if (sc.path.segments.empty() && sc.path.waypoints.size() < 2) r.fail(ptr("/path"), "needs segments or at least 2 waypoints");
  if (!sc.path.segments.empty() && !sc.path.waypoints.empty()) r.fail(ptr("/path"), "give either segments or waypoints, not both");

  // ego
  if (!r.has(ptr("/ego"))) r.fail(ptr("/ego"), "missing required section");
  sc.ego = detail::read_state(r, "/ego");
  if (sc.ego.v < 0.0) r.fail(ptr("/ego/v"), "must be >= 0");
  const auto path = sc.path.build();
  if (tracking_error(path, sc.ego) > 2.0) r.fail(ptr("/ego"), "ego must start within 2 m of the path");

  // vehicles
  for (std::size_t i = 0; i < r.array_size(ptr("/vehicles")); ++i) {
    const std::string b = "/vehicles/" + std::to_string(i);
    TrafficVehicle v;
    v.id          = static_cast<int>(r.integer(ptr(b + "/id"), static_cast<long>(i)));
    v.state       = detail::read_state(r, b);
    v.bbox_length = r.number(ptr(b + "/length"), vp.bbox_length);
    v.bbox_width  = r.number(ptr(b + "/width"), vp.bbox_width);
    if (!(v.bbox_length > 0.0)) r.fail(ptr(b + "/length"), "must be > 0");
    if (!(v.bbox_width > 0.0)) r.fail(ptr(b + "/width"), "must be > 0");
    if (v.state.v < 0.0) r.fail(ptr(b + "/v"), "must be >= 0");
    const auto beh = r.string(ptr(b + "/behavior"), "constant_velocity");
    if (beh == "constant_velocity") {
      v.behavior = Behavior::ConstantVelocity;
    } else if (beh == "stationary") {
      v.behavior = Behavior::Stationary;
    } else if (beh == "scripted") {
      v.behavior = Behavior::Scripted;
    } else {
      r.fail(ptr(b + "/behavior"), "expected constant_velocity, stationary or scripted");
    }
    v.nominal_speed = r.number(ptr(b + "/nominal_speed"), v.state.v);
    for (std::size_t k = 0; k < r.array_size(ptr(b + "/script")); ++k) {
      const std::string kb = b + "/script/" + std::to_string(k);
      v.script.push_back({r.number(ptr(kb + "/t")), detail::read_state(r, kb)});
      if (k > 0 && !(v.script[k].t > v.script[k - 1].t)) r.fail(ptr(kb + "/t"), "keyframe times must increase");
    }
    if (v.behavior == Behavior::Scripted && v.script.empty()) r.fail(ptr(b + "/script"), "scripted vehicle needs keyframes");
    for (const auto & other : sc.vehicles)
      if (other.id == v.id) r.fail(ptr(b + "/id"), "duplicate vehicle id");
    sc.vehicles.push_back(std::move(v));
  }

  // features
  for (std::size_t i = 0; i < r.array_size(ptr("/features")); ++i) {
    const std::string b = "/features/" + std::to_string(i);
    const auto type     = r.string(ptr(b + "/type"), "");
    RoadFeature f;
    f.zone = r.box(ptr(b + "/zone"));
    if (type == "speed_limit") {
      const double v = r.number(ptr(b + "/v_max"));
      if (!(v > 0.0)) r.fail(ptr(b + "/v_max"), "must be > 0");
      f.kind = SpeedLimit{v};
    } else if (type == "stop_sign" || type == "traffic_light") {
      f.stop_line   = r.point(ptr(b + "/stop_line"));
      f.stop_margin = r.number(ptr(b + "/stop_margin"), 0.5 * vp.bbox_length + 1.0);
      if (f.stop_margin < 0.0) r.fail(ptr(b + "/stop_margin"), "must be >= 0");
      if (type == "stop_sign") {
        f.kind = StopSign{};
      } else {
        TrafficLight tl;
        tl.offset = r.number(ptr(b + "/offset"), 0.0);
        const auto n = r.array_size(ptr(b + "/phases"));
        if (n == 0) r.fail(ptr(b + "/phases"), "needs at least one phase");
        for (std::size_t k = 0; k < n; ++k) {
          const std::string kb = b + "/phases/" + std::to_string(k);
          const double d       = r.number(ptr(kb + "/duration"));
          if (!(d > 0.0)) r.fail(ptr(kb + "/duration"), "must be > 0");
          tl.phases.emplace_back(detail::parse_color(r, ptr(kb + "/color")), d);
        }
        f.kind = tl;
      }
    } else {
      r.fail(ptr(b + "/type"), "expected speed_limit, stop_sign or traffic_light");
    }
    sc.features.push_back(std::move(f));
  }

  // controller
  auto & c             = sc.cfg;
  const std::string cb = "/controller";
  c.h                    = static_cast<int>(r.integer(ptr(cb + "/h"), c.h));
  c.dt                   = r.number(ptr(cb + "/dt"), c.dt);
  c.r_near               = r.number(ptr(cb + "/r_near"), c.r_near);
  c.d_safe               = r.number(ptr(cb + "/d_safe"), c.d_safe);
  c.r_ball               = r.number(ptr(cb + "/r_ball"), c.r_ball);
  c.n_samples            = static_cast<int>(r.integer(ptr(cb + "/n_samples"), c.n_samples));
  c.weights.w_u          = r.number(ptr(cb + "/w_u"), c.weights.w_u);
  c.weights.w_du         = r.number(ptr(cb + "/w_du"), c.weights.w_du);
  c.weights.w_track      = r.number(ptr(cb + "/w_track"), c.weights.w_track);
  c.big_m                = r.number(ptr(cb + "/big_m"), c.big_m);
  c.qp_budget            = r.number(ptr(cb + "/qp_budget"), c.qp_budget);
  c.max_nodes            = r.integer(ptr(cb + "/max_nodes"), c.max_nodes);
  c.monitor              = r.boolean(ptr(cb + "/monitor"), c.monitor);
  c.model_throttle_scale = r.number(ptr(cb + "/model_throttle_scale"), c.model_throttle_scale);
  c.speed_margin         = r.number(ptr(cb + "/speed_margin"), c.speed_margin);
  c.psi_trust            = r.number(ptr(cb + "/psi_trust"), c.psi_trust);
  try {
    c.validate();
  } catch (const std::invalid_argument & e) {
    const std::string msg = e.what();
    const auto field      = msg.substr(std::string("controller.").size(), msg.find(' ') - std::string("controller.").size());
    r.fail(ptr(cb + "/" + field), msg.substr(msg.find(' ') + 1));
  }
  return sc;
}

inline json scenario_to_json(const Scenario & sc)
{
  json j;
  j["name"]      = sc.name;
  j["seed"]      = sc.seed;
  j["max_steps"] = sc.max_steps;
  j["v_cruise"]  = sc.v_cruise;

  json path{{"spacing", sc.path.spacing}};
  if (sc.path.segments.empty()) {
    path["waypoints"] = json::array();
    for (const auto & p : sc.path.waypoints) path["waypoints"].push_back({p.x(), p.y()});
  } else {
    path["start"]    = {sc.path.start.x(), sc.path.start.y()};
    path["heading"]  = sc.path.heading;
    path["segments"] = json::array();
    for (const auto & s : sc.path.segments) {
      if (s.type == PathSegment::Type::Straight) {
        path["segments"].push_back({{"type", "straight"}, {"length", s.length}});
      } else {
        path["segments"].push_back({{"type", "arc"}, {"radius", s.radius}, {"angle", s.angle}});
      }
    }
  }
  j["path"] = path;
  j["ego"]  = detail::state_json(sc.ego);

  j["vehicles"] = json::array();
  for (const auto & v : sc.vehicles) {
    json o = detail::state_json(v.state);
    o["id"]            = v.id;
    o["length"]        = v.bbox_length;
    o["width"]         = v.bbox_width;
    o["nominal_speed"] = v.nominal_speed;
    o["behavior"]      = v.behavior == Behavior::Stationary ? "stationary" : v.behavior == Behavior::Scripted ? "scripted" : "constant_velocity";
    if (!v.script.empty()) {
      o["script"] = json::array();
      for (const auto & k : v.script) {
        json kj = detail::state_json(k.state);
        kj["t"] = k.t;
        o["script"].push_back(kj);
      }
    }
    j["vehicles"].push_back(o);
  }

  j["features"] = json::array();
  for (const auto & f : sc.features) {
    json o{{"zone", {f.zone.x_min, f.zone.x_max, f.zone.y_min, f.zone.y_max}}};
    if (const auto * sl = std::get_if<SpeedLimit>(&f.kind)) {
      o["type"]  = "speed_limit";
      o["v_max"] = sl->v_max;
    } else {
      o["stop_line"]   = {f.stop_line.x(), f.stop_line.y()};
      o["stop_margin"] = f.stop_margin;
      if (const auto * tl = std::get_if<TrafficLight>(&f.kind)) {
        o["type"]   = "traffic_light";
        o["offset"] = tl->offset;
        o["phases"] = json::array();
        for (const auto & [color, d] : tl->phases) o["phases"].push_back({{"color", to_string(color)}, {"duration", d}});
      } else {
        o["type"] = "stop_sign";
      }
    }
    j["features"].push_back(o);
  }

  const auto & c  = sc.cfg;
  j["controller"] = {{"h", c.h}, {"dt", c.dt}, {"r_near", c.r_near}, {"d_safe", c.d_safe}, {"r_ball", c.r_ball}, {"n_samples", c.n_samples},
    {"w_u", c.weights.w_u}, {"w_du", c.weights.w_du}, {"w_track", c.weights.w_track}, {"big_m", c.big_m}, {"qp_budget", c.qp_budget},
    {"max_nodes", c.max_nodes}, {"monitor", c.monitor}, {"model_throttle_scale", c.model_throttle_scale}, {"speed_margin", c.speed_margin}, {"psi_trust", c.psi_trust}};

  const auto & p      = sc.params;
  j["vehicle_params"] = {{"lf", p.lf}, {"lr", p.lr}, {"mass", p.mass}, {"yaw_inertia", p.yaw_inertia}, {"a_max", p.a_max}, {"b_max", p.b_max},
    {"delta_min", p.delta_min}, {"delta_max", p.delta_max}, {"pacejka_b", p.pacejka_b}, {"pacejka_c", p.pacejka_c}, {"pacejka_d", p.pacejka_d},
    {"bbox_length", p.bbox_length}, {"bbox_width", p.bbox_width}};
  return j;
}

inline Scenario parse_scenario(const std::string & text, const std::string & origin = "<scenario>")
{
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error & e) {
    throw ScenarioError(origin + ": " + e.what());
  }
  return scenario_from_json(root, text, origin);
}

inline Scenario load_scenario(const std::string & file)
{
  std::ifstream in(file);
  if (!in) throw ScenarioError(file + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), file);
}

inline void save_scenario(const Scenario & sc, const std::string & file)
{
  std::ofstream out(file);
  if (!out) throw ScenarioError(file + ": cannot write");
  out << scenario_to_json(sc).dump(2) << "\n";
}

}  // namespace stldrive
