#pragma once

/**
 * @file
 * @brief Depth-first branch and bound over the binary variables of a
 * ConstraintSystem, with QP relaxations at every node.
 */

#include "constraint_system.hpp"
#include "qp.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace stldrive {

enum class MiqpStatus { Optimal, Infeasible, TimedOut };

inline const char * to_string(MiqpStatus s)
{
  switch (s) {
  case MiqpStatus::Optimal: return "optimal";
  case MiqpStatus::Infeasible: return "infeasible";
  case MiqpStatus::TimedOut: return "timed_out";
  }
  return "?";
}

struct MiqpOptions
{
  /// Wall-clock budget in seconds; ignored when <= 0.
  double time_budget{0.08};
  /// Node budget (QP solves); ignored when <= 0. Unlike the wall clock this is reproducible.
  long max_nodes{0};
  double tol_int{1e-6};
  double tol_feas{1e-6};
  /// Optional per-variable preferred value for binaries (NaN = none). Used once,
  /// before the main search, by a dive that explores the hinted child first and
  /// stops at its first incumbent.
  std::vector<double> hint;
  bool record_tree{false};
  QpOptions qp{};
};

struct NodeRecord
{
  double parent_bound{-kInf};
  double bound{kInf};
  int depth{0};
  bool feasible{false};
};

struct MiqpSolution
{
  Eigen::VectorXd x;
  double objective{kInf};
  MiqpStatus status{MiqpStatus::Infeasible};
  bool has_solution{false};
  long nodes_explored{0};
  double solve_time{0.0};
  std::vector<NodeRecord> tree;
};

namespace detail {

class BranchAndBound
{
public:
  BranchAndBound(const ConstraintSystem & sys, const MiqpOptions & opt) : sys_(sys), opt_(opt), start_(std::chrono::steady_clock::now()) {}

  MiqpSolution run()
  {
    MiqpSolution out;
    const auto & lo = sys_.lower();
    const auto & hi = sys_.upper();

    bool exhausted = true;
    if (!opt_.hint.empty() && sys_.num_binaries() > 0) {
      std::vector<double> prefer(static_cast<std::size_t>(sys_.num_vars()), std::nan(""));
      bool any = false;
      for (std::size_t i = 0; i < prefer.size() && i < opt_.hint.size(); ++i) {
        if (sys_.is_binary(static_cast<VarRef>(i)) && !std::isnan(opt_.hint[i])) {
          prefer[i] = opt_.hint[i] >= 0.5 ? 1.0 : 0.0;
          any       = true;
        }
      }
      if (any) search(lo, hi, /*stop_at_first=*/true, 4L * sys_.num_binaries() + 16, nullptr, &prefer);
    }
    if (!out_of_budget()) {
      exhausted = search(lo, hi, false, 0, &out.tree);
    } else {
      exhausted = false;
    }

    out.nodes_explored = nodes_;
    out.solve_time     = elapsed();
    if (incumbent_) {
      out.x            = *incumbent_;
      out.objective    = incumbent_obj_;
      out.has_solution = true;
      out.status       = exhausted ? MiqpStatus::Optimal : MiqpStatus::TimedOut;
    } else {
      out.x      = Eigen::VectorXd::Zero(sys_.num_vars());
      out.status = exhausted ? MiqpStatus::Infeasible : MiqpStatus::TimedOut;
    }
    return out;
  }

private:
  struct Node
  {
    std::vector<double> lo, hi;
    double parent_bound;
    int depth;
  };

  double elapsed() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

  bool out_of_budget() const
  {
    if (opt_.max_nodes > 0 && nodes_ >= opt_.max_nodes) return true;
    if (opt_.time_budget > 0.0 && elapsed() > opt_.time_budget) return true;
    return false;
  }

  double prune_tol() const { return 1e-9 * std::max(1.0, std::abs(incumbent_obj_)); }

  /// Returns true when the tree rooted at [lo, hi] was fully explored.
  /// With `prefer`, the preferred value of the branching binary is explored first (0 when it has none).
  bool search(const std::vector<double> & lo,
    const std::vector<double> & hi,
    bool stop_at_first,
    long local_limit,
    std::vector<NodeRecord> * tree,
    const std::vector<double> * prefer = nullptr)
  {
    std::vector<Node> stack;
    stack.push_back({lo, hi, -kInf, 0});
    long local = 0;
    while (!stack.empty()) {
      if (out_of_budget()) return false;
      if (local_limit > 0 && local >= local_limit) return false;
      Node node = std::move(stack.back());
      stack.pop_back();
      ++nodes_;
      ++local;

      const QpSolution rel = solve_qp(sys_, node.lo, node.hi, opt_.qp);
      NodeRecord rec{node.parent_bound, rel.objective, node.depth, rel.status == QpStatus::Optimal};
      if (tree && opt_.record_tree) tree->push_back(rec);
      if (rel.status != QpStatus::Optimal) continue;
      if (incumbent_ && rel.objective >= incumbent_obj_ - prune_tol()) continue;

      int branch   = -1;
      double worst = opt_.tol_int;
      for (int i = 0; i < sys_.num_vars(); ++i) {
        if (!sys_.is_binary(i) || node.lo[static_cast<std::size_t>(i)] == node.hi[static_cast<std::size_t>(i)]) continue;
        const double f = std::min(rel.x[i], 1.0 - rel.x[i]);
        if (f > worst) {
          worst  = f;
          branch = i;
        }
      }

      if (branch < 0) {
        // integral within tol_int: re-solve with the binaries pinned so the big-M rows hold exactly
        std::vector<double> flo(node.lo), fhi(node.hi);
        for (int i = 0; i < sys_.num_vars(); ++i) {
          if (!sys_.is_binary(i)) continue;
          flo[static_cast<std::size_t>(i)] = fhi[static_cast<std::size_t>(i)] = std::round(std::clamp(rel.x[i], 0.0, 1.0));
        }
        const QpSolution leaf = solve_qp(sys_, flo, fhi, opt_.qp);
        if (leaf.status == QpStatus::Optimal && sys_.max_violation(leaf.x) <= opt_.tol_feas &&
            (!incumbent_ || leaf.objective < incumbent_obj_ - prune_tol())) {
          incumbent_     = leaf.x;
          incumbent_obj_ = leaf.objective;
          if (stop_at_first) return false;
        }
        continue;
      }

      Node one{node.lo, node.hi, rel.objective, node.depth + 1};
      one.lo[static_cast<std::size_t>(branch)] = 1.0;
      Node zero{std::move(node.lo), std::move(node.hi), rel.objective, node.depth + 1};
      zero.hi[static_cast<std::size_t>(branch)] = 0.0;
      if (prefer && (*prefer)[static_cast<std::size_t>(branch)] == 1.0) {
        stack.push_back(std::move(zero));
        stack.push_back(std::move(one));
      } else {
        stack.push_back(std::move(one));
        stack.push_back(std::move(zero));
      }
    }
    return true;
  }

  const ConstraintSystem & sys_;
  const MiqpOptions & opt_;
  std::chrono::steady_clock::time_point start_;
  long nodes_{0};
  std::optional<Eigen::VectorXd> incumbent_;
  double incumbent_obj_{kInf};
};

}  // namespace detail

/**
 * @brief Solves the MIQP by depth-first branch and bound.
 *
 * Branches on the most fractional binary (lowest index on ties) and explores
 * the 0-branch first. Stops at the first exhausted tree or at the budget;
 * a budget stop with an incumbent reports TimedOut with has_solution set.
 */
inline MiqpSolution solve_miqp(const ConstraintSystem & sys, const MiqpOptions & opt = {})
{
  detail::BranchAndBound bnb(sys, opt);
  return bnb.run();
}

}  // namespace stldrive
