#pragma once

/**
 * @file
 * @brief Signal temporal logic over ego state traces: formulas in negation
 * normal form, discrete-time boolean semantics with windows clipped at the end
 * of the trace, a finite-trace monitor, and the traffic-rule library.
 */

#include "environment.hpp"
#include "vehicle.hpp"

#include <array>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace stldrive {

enum class Sense { Le, Ge };

/// coeffs . [x, y, psi, v] (<= | >=) bound
struct AffinePredicate
{
  std::array<double, 4> coeffs{0.0, 0.0, 0.0, 0.0};
  double bound{0.0};
  Sense sense{Sense::Le};

  double lhs(const SimpleState & s) const { return coeffs[0] * s.x + coeffs[1] * s.y + coeffs[2] * s.psi + coeffs[3] * s.v; }
  bool holds(const SimpleState & s) const { return sense == Sense::Le ? lhs(s) <= bound : lhs(s) >= bound; }
};

/// |x - x_other| + |y - y_other| >= d_safe, with the other position indexed by step.
struct Collision1Norm
{
  int vehicle_id{0};
  std::vector<Vec2> other;
  double d_safe{1.0};
};

/// The ego box (from the state and the ego dimensions) does not meet the other box at that step.
struct CollisionAabb
{
  int vehicle_id{0};
  std::vector<Aabb> other;
  double ego_length{4.22};
  double ego_width{1.8};
};

using Predicate = std::variant<AffinePredicate, Collision1Norm, CollisionAabb>;

inline bool holds(const Predicate & p, const SimpleState & s, std::size_t step)
{
  return std::visit(
    [&](const auto & q) -> bool {
      using T = std::decay_t<decltype(q)>;
      if constexpr (std::is_same_v<T, AffinePredicate>) {
        return q.holds(s);
      } else if constexpr (std::is_same_v<T, Collision1Norm>) {
        if (step >= q.other.size()) throw std::out_of_range("Collision1Norm: step beyond predicted trajectory");
        return one_norm_clearance({s.x, s.y}, q.other[step]) >= q.d_safe;
      } else {
        if (step >= q.other.size()) throw std::out_of_range("CollisionAabb: step beyond predicted boxes");
        return !aabb_intersects(aabb_of(s, q.ego_length, q.ego_width), q.other[step]);
      }
    },
    p);
}

enum class Op { Pred, Not, And, Or, Always, Eventually, Until };

struct FormulaNode;

/// Immutable, cheaply copyable formula handle.
class Formula
{
public:
  Formula() = default;
  explicit Formula(std::shared_ptr<const FormulaNode> n) : node_(std::move(n)) {}

  const FormulaNode & operator*() const { return *node_; }
  const FormulaNode * operator->() const { return node_.get(); }
  const FormulaNode * get() const { return node_.get(); }
  explicit operator bool() const { return static_cast<bool>(node_); }

private:
  std::shared_ptr<const FormulaNode> node_;
};

struct FormulaNode
{
  Op op{Op::Pred};
  Predicate pred;                 // Pred, Not
  std::vector<Formula> children;  // And, Or: any; temporal: 1 (Until: 2, lhs then rhs)
  int a{0};
  int b{0};
};

namespace stl {

inline void check_window(int a, int b)
{
  if (a < 0 || b < a) throw std::invalid_argument("STL window must satisfy 0 <= a <= b");
}

inline Formula pred(Predicate p)
{
  auto n  = std::make_shared<FormulaNode>();
  n->op   = Op::Pred;
  n->pred = std::move(p);
  return Formula(std::move(n));
}

/// Negation is only available on predicates.
inline Formula negate(Predicate p)
{
  auto n  = std::make_shared<FormulaNode>();
  n->op   = Op::Not;
  n->pred = std::move(p);
  return Formula(std::move(n));
}

inline Formula all_of(std::vector<Formula> fs)
{
  auto n      = std::make_shared<FormulaNode>();
  n->op       = Op::And;
  n->children = std::move(fs);
  return Formula(std::move(n));
}

inline Formula any_of(std::vector<Formula> fs)
{
  auto n      = std::make_shared<FormulaNode>();
  n->op       = Op::Or;
  n->children = std::move(fs);
  return Formula(std::move(n));
}

inline Formula temporal(Op op, int a, int b, std::vector<Formula> fs)
{
  check_window(a, b);
  auto n      = std::make_shared<FormulaNode>();
  n->op       = op;
  n->a        = a;
  n->b        = b;
  n->children = std::move(fs);
  return Formula(std::move(n));
}

inline Formula always(int a, int b, Formula f) { return temporal(Op::Always, a, b, {std::move(f)}); }
inline Formula eventually(int a, int b, Formula f) { return temporal(Op::Eventually, a, b, {std::move(f)}); }
inline Formula until(int a, int b, Formula lhs, Formula rhs) { return temporal(Op::Until, a, b, {std::move(lhs), std::move(rhs)}); }

inline AffinePredicate affine(std::array<double, 4> coeffs, Sense sense, double bound) { return {coeffs, bound, sense}; }

/// Number of nodes (shared subtrees counted once per occurrence).
inline std::size_t size(const Formula & f)
{
  std::size_t n = 1;
  for (const auto & c : f->children) n += size(c);
  return n;
}

}  // namespace stl

namespace detail {

inline bool eval_rec(const FormulaNode & f, std::span<const SimpleState> trace, std::size_t t)
{
  const std::size_t last = trace.size() - 1;
  switch (f.op) {
  case Op::Pred:
    if (t > last) throw std::out_of_range("eval: step beyond trace");
    return holds(f.pred, trace[t], t);
  case Op::Not:
    if (t > last) throw std::out_of_range("eval: step beyond trace");
    return !holds(f.pred, trace[t], t);
  case Op::And:
    for (const auto & c : f.children)
      if (!eval_rec(*c, trace, t)) return false;
    return true;
  case Op::Or:
    for (const auto & c : f.children)
      if (eval_rec(*c, trace, t)) return true;
    return false;
  case Op::Always:
    for (std::size_t k = t + f.a; k <= std::min(t + f.b, last); ++k)
      if (!eval_rec(*f.children[0], trace, k)) return false;
    return true;
  case Op::Eventually:
    for (std::size_t k = t + f.a; k <= std::min(t + f.b, last); ++k)
      if (eval_rec(*f.children[0], trace, k)) return true;
    return false;
  case Op::Until:
    for (std::size_t k = t + f.a; k <= std::min(t + f.b, last); ++k) {
      if (!eval_rec(*f.children[1], trace, k)) continue;
      bool prefix = true;
      for (std::size_t j = t; j < k && prefix; ++j) prefix = eval_rec(*f.children[0], trace, j);
      if (prefix) return true;
    }
    return false;
  }
  return false;
}

}  // namespace detail

/**
 * @brief Boolean satisfaction of `f` by `trace` at step t.
 *
 * Temporal windows are clipped to the trace: Always over an empty window is
 * true, Eventually and Until over an empty window are false.
 */
inline bool eval(const Formula & f, std::span<const SimpleState> trace, std::size_t t = 0)
{
  if (trace.empty()) throw std::invalid_argument("eval: empty trace");
  return detail::eval_rec(*f, trace, t);
}

struct NamedRule
{
  std::string name;
  Formula formula;
};

using ActiveRuleSet = std::vector<NamedRule>;

struct MonitorVerdict
{
  std::vector<std::pair<std::string, bool>> rules;
  bool pass{true};
};

/// Evaluates every rule at step `t` (0 unless the caller skips the current sample).
inline MonitorVerdict monitor_trace(const ActiveRuleSet & rules, std::span<const SimpleState> trace, std::size_t t = 0)
{
  MonitorVerdict v;
  for (const auto & r : rules) {
    const bool ok = eval(r.formula, trace, t);
    v.rules.emplace_back(r.name, ok);
    v.pass = v.pass && ok;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Rule library

inline constexpr double kStopSpeed = 0.1;
/// Speed treated as standing still at a held stop line.
inline constexpr double kHoldSpeed = 0.01;

/// always[0,h] (v <= v_max)
inline Formula speed_limit_rule(double v_max, int h)
{
  if (!(v_max > 0.0)) throw std::invalid_argument("speed_limit_rule: v_max must be > 0");
  return stl::always(0, h, stl::pred(stl::affine({0, 0, 0, 1}, Sense::Le, v_max)));
}

/// always[0,h] (outside(zone) or v <= v_max): binds only at steps spent inside the zone.
inline Formula zoned_speed_limit_rule(double v_max, const Aabb & zone, int h)
{
  if (!(v_max > 0.0)) throw std::invalid_argument("zoned_speed_limit_rule: v_max must be > 0");
  std::vector<Formula> alt{
    stl::pred(stl::affine({1, 0, 0, 0}, Sense::Le, zone.x_min)),
    stl::pred(stl::affine({1, 0, 0, 0}, Sense::Ge, zone.x_max)),
    stl::pred(stl::affine({0, 1, 0, 0}, Sense::Le, zone.y_min)),
    stl::pred(stl::affine({0, 1, 0, 0}, Sense::Ge, zone.y_max)),
    stl::pred(stl::affine({0, 0, 0, 1}, Sense::Le, v_max)),
  };
  return stl::always(0, h, stl::any_of(std::move(alt)));
}

/// eventually[0,h] (v <= eps_stop)
inline Formula stop_sign_rule(int h, double eps_stop = kStopSpeed)
{
  return stl::eventually(0, h, stl::pred(stl::affine({0, 0, 0, 1}, Sense::Le, eps_stop)));
}

/// always[0,h] (v <= eps_hold)
inline Formula standstill_rule(int h, double eps_hold = kHoldSpeed)
{
  return stl::always(0, h, stl::pred(stl::affine({0, 0, 0, 1}, Sense::Le, eps_hold)));
}

/**
 * @brief always[0,h] (s <= s_line - margin), with s the progress along `tangent`.
 *
 * `tangent` is the unit path direction at the stop line; the progress
 * coordinate is affine in (x, y).
 */
inline Formula stop_line_rule(const Vec2 & tangent, const Vec2 & line, double margin, int h)
{
  return stl::always(0, h, stl::pred(stl::affine({tangent.x(), tangent.y(), 0, 0}, Sense::Le, tangent.dot(line) - margin)));
}

inline Formula collision_rule(Collision1Norm p, int h) { return stl::always(0, h, stl::pred(std::move(p))); }
inline Formula collision_rule(CollisionAabb p, int h) { return stl::always(0, h, stl::pred(std::move(p))); }

}  // namespace stldrive
