#pragma once

/**
 * @file
 * @brief Big-M translation of STL formulas over planned states into
 * mixed-integer linear constraints.
 *
 * Every (subformula, step) pair gets one satisfaction variable. Predicates are
 * encoded in both directions (z = 1 forces the predicate, z = 0 forces its
 * complement); conjunctions and disjunctions use the standard
 * min / max linearizations; temporal operators unfold over their window,
 * clipped to the planning horizon.
 *
 * Satisfaction variables whose value is already decided by the variable
 * bounds are replaced by fixed constants, which keeps them out of the search.
 */

#include "constraint_system.hpp"
#include "stl.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stldrive {

/// Decision variables holding [x, y, psi, v] at one step; -1 for components not modelled.
struct StateVars
{
  std::array<VarRef, 4> idx{-1, -1, -1, -1};
};

/// One quadrant disjunct  sx (X - ox) + sy (Y - oy) >= d_safe  guarded by `var`.
struct QuadrantBinary
{
  VarRef var{-1};
  int step{0};
  int vehicle_id{0};
  double sx{1.0};
  double sy{1.0};
  Vec2 other{Vec2::Zero()};
};

class MilcEncoder
{
public:
  /// Gap enforced by negated predicates, which are strict inequalities.
  static constexpr double kStrictMargin = 1e-6;

  MilcEncoder(ConstraintSystem & sys, std::vector<StateVars> steps, double big_m) : sys_(sys), steps_(std::move(steps)), big_m_(big_m)
  {
    if (steps_.empty()) throw std::invalid_argument("MilcEncoder: need at least one step");
    if (!(big_m_ > 0.0)) throw std::invalid_argument("MilcEncoder: big_m must be > 0");
  }

  int horizon() const { return static_cast<int>(steps_.size()) - 1; }

  /// Satisfaction variable of `f` at step t.
  VarRef encode(const Formula & f, int t)
  {
    const auto key = std::make_pair(f.get(), t);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    const VarRef z = encode_node(*f, t);
    memo_.emplace(key, z);
    return z;
  }

  /**
   * @brief Requires `f` to hold at step t.
   *
   * Conjunctive structure (And, Always) is pushed down and predicates under it
   * become plain constraints, so only disjunctions introduce binaries.
   */
  void encode_rule(const Formula & f, int t = 0)
  {
    const FormulaNode & n = *f;
    const int h = horizon();
    switch (n.op) {
    case Op::And:
      for (const auto & c : n.children) encode_rule(c, t);
      return;
    case Op::Always:
      for (int k = t + n.a; k <= std::min(t + n.b, h); ++k) encode_rule(n.children[0], k);
      return;
    case Op::Pred:
    case Op::Not:
      if (t < 0 || t > h) throw std::out_of_range("encode: predicate step outside horizon");
      if (const auto * ap = std::get_if<AffinePredicate>(&n.pred)) {
        require_affine(*ap, t, n.op == Op::Not);
        return;
      }
      break;
    default: break;
    }
    pin(encode(f, t));
  }

  /// Values for every binary created so far, evaluated at the continuous point `x` (NaN elsewhere).
  std::vector<double> hints(const Eigen::VectorXd & x) const
  {
    std::vector<double> val(static_cast<std::size_t>(sys_.num_vars()), std::nan(""));
    auto value = [&](VarRef v) {
      const auto u = static_cast<std::size_t>(v);
      if (!std::isnan(val[u])) return val[u];
      return sys_.lo(v) == sys_.hi(v) ? sys_.lo(v) : x[v];
    };
    for (const auto & r : records_) {
      double out = 0.0;
      switch (r.kind) {
      case Record::Pred: {
        double lhs = 0.0;
        for (const auto & [i, c] : r.expr) lhs += c * value(i);
        out = lhs <= r.bound ? 1.0 : 0.0;
        break;
      }
      case Record::And:
        out = 1.0;
        for (VarRef k : r.kids) out = std::min(out, value(k));
        break;
      case Record::Or:
        for (VarRef k : r.kids) out = std::max(out, value(k));
        break;
      case Record::Clear: {
        // the quadrant with the largest slack is the one a feasible plan near x would use
        std::size_t best = 0;
        double best_slack = -kInf;
        for (std::size_t j = 0; j < r.kids.size(); ++j) {
          const auto & q = quadrants_[static_cast<std::size_t>(r.quad_first) + j];
          const double slack = q.sx * (value(q_x_[j + static_cast<std::size_t>(r.quad_first)]) - q.other.x()) +
                               q.sy * (value(q_y_[j + static_cast<std::size_t>(r.quad_first)]) - q.other.y());
          if (slack > best_slack) {
            best_slack = slack;
            best       = j;
          }
        }
        for (std::size_t j = 0; j < r.kids.size(); ++j) val[static_cast<std::size_t>(r.kids[j])] = j == best ? 1.0 : 0.0;
        out = 1.0;
        break;
      }
      }
      if (r.z >= 0) val[static_cast<std::size_t>(r.z)] = out;
    }
    return val;
  }

  /// Conjunction over `steps` of the 1-norm clearance predicate against `other` (indexed by step).
  VarRef encode_collision_1norm(int vehicle_id, std::span<const Vec2> other, double d_safe, int first, int last)
  {
    std::vector<VarRef> zs;
    for (int k = std::max(0, first); k <= std::min(last, horizon()); ++k) {
      if (k >= static_cast<int>(other.size())) throw std::out_of_range("encode_collision_1norm: trajectory too short");
      zs.push_back(encode_clearance(vehicle_id, other[static_cast<std::size_t>(k)], d_safe, k));
    }
    return conj(zs);
  }

  const std::vector<QuadrantBinary> & quadrants() const { return quadrants_; }
  VarRef const_true() { return constant(true); }
  VarRef const_false() { return constant(false); }

private:
  VarRef encode_node(const FormulaNode & f, int t)
  {
    const int h = horizon();
    switch (f.op) {
    case Op::Pred:
    case Op::Not: {
      if (t < 0 || t > h) throw std::out_of_range("encode: predicate step outside horizon");
      return encode_predicate(f.pred, t, f.op == Op::Not);
    }
    case Op::And: {
      std::vector<VarRef> zs;
      for (const auto & c : f.children) zs.push_back(encode(c, t));
      return conj(zs);
    }
    case Op::Or: {
      std::vector<VarRef> zs;
      for (const auto & c : f.children) zs.push_back(encode(c, t));
      return disj(zs);
    }
    case Op::Always:
    case Op::Eventually: {
      std::vector<VarRef> zs;
      for (int k = t + f.a; k <= std::min(t + f.b, h); ++k) zs.push_back(encode(f.children[0], k));
      return f.op == Op::Always ? conj(zs) : disj(zs);
    }
    case Op::Until: {
      std::vector<VarRef> alts;
      for (int k = t + f.a; k <= std::min(t + f.b, h); ++k) {
        std::vector<VarRef> parts{encode(f.children[1], k)};
        for (int j = t; j < k; ++j) parts.push_back(encode(f.children[0], j));
        alts.push_back(conj(parts));
      }
      return disj(alts);
    }
    }
    throw std::logic_error("encode: unknown operator");
  }

  VarRef constant(bool value)
  {
    auto & slot = value ? one_ : zero_;
    if (!slot) {
      const VarRef v = sys_.add_binary(value ? "const_true" : "const_false");
      sys_.set_bounds(v, value ? 1.0 : 0.0, value ? 1.0 : 0.0);
      slot = v;
    }
    return *slot;
  }

  bool is_const(VarRef z, bool value) const
  {
    const auto & slot = value ? one_ : zero_;
    return slot && *slot == z;
  }

  struct Record
  {
    enum Kind { Pred, And, Or, Clear } kind;
    VarRef z{-1};
    std::vector<std::pair<VarRef, double>> expr;  ///< Pred: expr <= bound
    double bound{0.0};
    std::vector<VarRef> kids;
    int quad_first{0};  ///< Clear: index of its first quadrant
  };

  void pin(VarRef z)
  {
    if (is_const(z, true)) return;
    if (is_const(z, false)) {
      // keeps the system infeasible without special casing
      sys_.add_eq({{z, 1.0}}, 1.0);
      return;
    }
    sys_.set_bounds(z, 1.0, 1.0);
  }

  /// Normalizes an affine predicate (or its negation) at step t to  expr <= bound.
  std::pair<std::vector<std::pair<VarRef, double>>, double> normalized(const AffinePredicate & ap, int t, bool negated) const
  {
    std::vector<std::pair<VarRef, double>> expr;
    double bound = ap.bound;
    const bool le = (ap.sense == Sense::Le) != negated;
    for (int c = 0; c < 4; ++c) {
      const double a = ap.coeffs[static_cast<std::size_t>(c)];
      if (a == 0.0) continue;
      const VarRef v = steps_[static_cast<std::size_t>(t)].idx[static_cast<std::size_t>(c)];
      if (v < 0) throw std::invalid_argument("encode: predicate uses a state component with no decision variable");
      expr.emplace_back(v, le ? a : -a);
    }
    if (!le) bound = -bound;
    // a negated non-strict predicate is strict; keep a small margin from the boundary
    if (negated) bound -= kStrictMargin;
    return {std::move(expr), bound};
  }

  void require_affine(const AffinePredicate & ap, int t, bool negated)
  {
    auto [expr, bound] = normalized(ap, t, negated);
    if (expr.empty()) {
      if (!(0.0 <= bound)) pin(constant(false));
      return;
    }
    const auto [lo, hi] = range(expr);
    if (hi <= bound) return;
    if (lo > bound) {
      pin(constant(false));
      return;
    }
    sys_.add_le(std::move(expr), bound);
  }

  VarRef conj(const std::vector<VarRef> & in)
  {
    std::vector<VarRef> zs;
    for (VarRef z : in) {
      if (is_const(z, false)) return constant(false);
      if (!is_const(z, true)) zs.push_back(z);
    }
    if (zs.empty()) return constant(true);
    if (zs.size() == 1) return zs[0];
    const VarRef z = sys_.add_binary("and");
    records_.push_back({Record::And, z, {}, 0.0, zs, 0});
    std::vector<std::pair<VarRef, double>> sum{{z, 1.0}};
    for (VarRef c : zs) {
      sys_.add_le({{z, 1.0}, {c, -1.0}}, 0.0);
      sum.emplace_back(c, -1.0);
    }
    // z >= sum(c) - (n - 1)
    sys_.add_ge(sum, -static_cast<double>(zs.size() - 1));
    return z;
  }

  VarRef disj(const std::vector<VarRef> & in)
  {
    std::vector<VarRef> zs;
    for (VarRef z : in) {
      if (is_const(z, true)) return constant(true);
      if (!is_const(z, false)) zs.push_back(z);
    }
    if (zs.empty()) return constant(false);
    if (zs.size() == 1) return zs[0];
    const VarRef z = sys_.add_binary("or");
    records_.push_back({Record::Or, z, {}, 0.0, zs, 0});
    std::vector<std::pair<VarRef, double>> sum{{z, 1.0}};
    for (VarRef c : zs) {
      sys_.add_ge({{z, 1.0}, {c, -1.0}}, 0.0);
      sum.emplace_back(c, -1.0);
    }
    sys_.add_le(sum, 0.0);
    return z;
  }

  /// Range of sum(terms) over the variable bounds.
  std::pair<double, double> range(const std::vector<std::pair<VarRef, double>> & terms) const
  {
    double lo = 0.0, hi = 0.0;
    for (const auto & [i, c] : terms) {
      const double a = c * sys_.lo(i), b = c * sys_.hi(i);
      lo += std::min(a, b);
      hi += std::max(a, b);
    }
    return {lo, hi};
  }

  VarRef encode_predicate(const Predicate & p, int t, bool negated)
  {
    if (const auto * ap = std::get_if<AffinePredicate>(&p)) {
      auto [expr, bound] = normalized(*ap, t, negated);
      if (expr.empty()) return constant(0.0 <= bound);

      const auto [lo, hi] = range(expr);
      if (hi <= bound) return constant(true);
      if (lo > bound) return constant(false);

      const VarRef z = sys_.add_binary("p" + std::to_string(t));
      records_.push_back({Record::Pred, z, expr, bound, {}, 0});
      // z = 1  =>  expr <= bound
      auto a1 = expr;
      a1.emplace_back(z, big_m_);
      sys_.add_le(std::move(a1), bound + big_m_);
      // z = 0  =>  expr >= bound
      auto a2 = expr;
      a2.emplace_back(z, big_m_);
      sys_.add_ge(std::move(a2), bound);
      return z;
    }
    if (negated) throw std::invalid_argument("encode: negated collision predicates are not supported");
    if (const auto * cp = std::get_if<Collision1Norm>(&p)) {
      if (t >= static_cast<int>(cp->other.size())) throw std::out_of_range("encode: collision trajectory too short");
      return encode_clearance(cp->vehicle_id, cp->other[static_cast<std::size_t>(t)], cp->d_safe, t);
    }
    throw std::invalid_argument("encode: box collision predicates have no linear encoding");
  }

  VarRef encode_clearance(int vehicle_id, const Vec2 & other, double d_safe, int t)
  {
    const auto & sv = steps_[static_cast<std::size_t>(t)];
    const VarRef vx = sv.idx[0], vy = sv.idx[1];
    if (vx < 0 || vy < 0) throw std::invalid_argument("encode: clearance needs x and y decision variables");

    // 1-norm distance from `other` to the box of reachable positions
    const double dx_min = std::max({0.0, sys_.lo(vx) - other.x(), other.x() - sys_.hi(vx)});
    const double dy_min = std::max({0.0, sys_.lo(vy) - other.y(), other.y() - sys_.hi(vy)});
    if (dx_min + dy_min >= d_safe) return constant(true);
    const double dx_max = std::max(std::abs(sys_.lo(vx) - other.x()), std::abs(sys_.hi(vx) - other.x()));
    const double dy_max = std::max(std::abs(sys_.lo(vy) - other.y()), std::abs(sys_.hi(vy) - other.y()));
    if (dx_max + dy_max < d_safe) return constant(false);

    const int first = static_cast<int>(quadrants_.size());
    std::vector<VarRef> picks;
    static constexpr std::array<std::array<double, 2>, 4> kSigns{{{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};
    for (const auto & s : kSigns) {
      const std::vector<std::pair<VarRef, double>> expr{{vx, s[0]}, {vy, s[1]}};
      const double rhs = d_safe + s[0] * other.x() + s[1] * other.y();
      const auto [lo, hi] = range(expr);
      if (lo >= rhs) return constant(true);
      if (hi < rhs) continue;
      const VarRef q = sys_.add_binary("quad" + std::to_string(t));
      // q = 1  =>  expr >= rhs
      sys_.add_ge({{vx, s[0]}, {vy, s[1]}, {q, -big_m_}}, rhs - big_m_);
      quadrants_.push_back({q, t, vehicle_id, s[0], s[1], other});
      q_x_.push_back(vx);
      q_y_.push_back(vy);
      picks.push_back(q);
    }
    if (picks.empty()) return constant(false);
    const VarRef z = sys_.add_binary("clear" + std::to_string(t));
    records_.push_back({Record::Clear, z, {}, 0.0, picks, first});
    std::vector<std::pair<VarRef, double>> sum{{z, 1.0}};
    for (VarRef q : picks) sum.emplace_back(q, -1.0);
    sys_.add_le(std::move(sum), 0.0);
    return z;
  }

  ConstraintSystem & sys_;
  std::vector<StateVars> steps_;
  double big_m_;
  std::map<std::pair<const FormulaNode *, int>, VarRef> memo_;
  std::optional<VarRef> one_, zero_;
  std::vector<QuadrantBinary> quadrants_;
  std::vector<VarRef> q_x_, q_y_;
  std::vector<Record> records_;
};

/// Encodes `f` at step 0 over the given per-step state variables; returns the root satisfaction variable.
inline VarRef encode(const Formula & f, ConstraintSystem & sys, std::vector<StateVars> steps, double big_m)
{
  MilcEncoder enc(sys, std::move(steps), big_m);
  return enc.encode(f, 0);
}

}  // namespace stldrive
