#pragma once

/**
 * @file
 * @brief Dense convex QP solver (Goldfarb-Idnani dual active-set method).
 *
 * Solves the continuous relaxation of a ConstraintSystem: binaries are treated
 * as continuous variables in their current bounds. Variables whose bounds
 * coincide are substituted out before the solve.
 */

#include "constraint_system.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace stldrive {

enum class QpStatus { Optimal, Infeasible, IterLimit };

inline const char * to_string(QpStatus s)
{
  switch (s) {
  case QpStatus::Optimal: return "optimal";
  case QpStatus::Infeasible: return "infeasible";
  case QpStatus::IterLimit: return "iter_limit";
  }
  return "?";
}

struct QpSolution
{
  Eigen::VectorXd x;
  double objective{kInf};
  QpStatus status{QpStatus::Infeasible};
  int iterations{0};
  /// Multipliers such that Qx + q + sum_i lambda_i a_i - bound_duals = 0 on free variables;
  /// lambda_i >= 0 for inequality rows.
  Eigen::VectorXd constraint_duals;
  /// Positive when a lower bound is active, negative for an upper bound.
  Eigen::VectorXd bound_duals;
};

struct QpOptions
{
  double ridge{1e-9};    ///< added to diag(Q), scaled by max(1, max|diag Q|)
  double tol_feas{1e-9};
  int max_iter{0};       ///< 0: 50 * (n + m) + 100
};

namespace detail {

/// Row of the reduced problem in the form n'x >= b (inequality) or n'x = b.
struct GiRow
{
  std::vector<std::pair<int, double>> n;
  double b{0.0};
  double norm{1.0};
  int origin{-1};   ///< constraint index, or -(var + 2) for bounds
  double sign{1.0}; ///< maps the row multiplier back to the original orientation
};

class GoldfarbIdnani
{
public:
  GoldfarbIdnani(Eigen::MatrixXd g, Eigen::VectorXd a, std::vector<GiRow> eqs, std::vector<GiRow> ineqs, const QpOptions & opt)
      : g_(std::move(g)), a_(std::move(a)), eqs_(std::move(eqs)), ineqs_(std::move(ineqs)), opt_(opt)
  {}

  QpStatus solve()
  {
    const int n = static_cast<int>(a_.size());
    n_          = n;
    x_          = Eigen::VectorXd::Zero(n);
    if (n == 0) return check_trivial();

    Eigen::LLT<Eigen::MatrixXd> llt(g_);
    if (llt.info() != Eigen::Success) return QpStatus::Infeasible;
    const Eigen::MatrixXd l = llt.matrixL();
    // J = L^{-T}
    j_ = l.transpose().triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(n, n));
    r_ = Eigen::MatrixXd::Zero(n, n);
    x_ = -llt.solve(a_);
    x_scale_ = x_.cwiseAbs().maxCoeff();
    iq_ = 0;
    r_norm_ = 1.0;
    active_.clear();
    u_.clear();

    const int m_total = static_cast<int>(eqs_.size() + ineqs_.size());
    const int max_iter = opt_.max_iter > 0 ? opt_.max_iter : 50 * (n + m_total) + 100;

    Eigen::VectorXd d(n), z(n), r(n);

    for (std::size_t e = 0; e < eqs_.size(); ++e) {
      const GiRow & row = eqs_[e];
      step_direction(row, d, z, r);
      const double s     = dot(row, x_) - row.b;
      const double d2sq  = d.tail(n - iq_).squaredNorm();
      const double t2    = is_dependent(d) ? 0.0 : -s / d2sq;
      x_ += t2 * z;
      x_scale_ = std::max(x_scale_, x_.cwiseAbs().maxCoeff());
      for (int k = 0; k < iq_; ++k) u_[k] -= t2 * r[k];
      if (is_dependent(d)) {
        if (std::abs(s) > tol(row)) return QpStatus::Infeasible;
        continue;
      }
      if (!add_constraint(d)) return QpStatus::Infeasible;
      active_.push_back(static_cast<int>(e));
      u_.push_back(t2);
    }
    num_eq_active_ = iq_;

    std::vector<char> is_active(ineqs_.size(), 0);
    for (iterations_ = 0; iterations_ < max_iter;) {
      // most violated inequality, scaled by its row norm
      int p = -1;
      double worst = 0.0;
      for (std::size_t i = 0; i < ineqs_.size(); ++i) {
        if (is_active[i]) continue;
        const double s = dot(ineqs_[i], x_) - ineqs_[i].b;
        if (s < -tol(ineqs_[i]) && s / ineqs_[i].norm < worst) {
          worst = s / ineqs_[i].norm;
          p     = static_cast<int>(i);
        }
      }
      if (p < 0) return QpStatus::Optimal;

      const GiRow & row = ineqs_[static_cast<std::size_t>(p)];
      double u_plus     = 0.0;
      for (;;) {
        if (++iterations_ > max_iter) return QpStatus::IterLimit;
        step_direction(row, d, z, r);
        const double s = dot(row, x_) - row.b;

        // partial (dual) step: first active inequality whose multiplier would go negative
        double t1 = kInf;
        int l     = -1;
        for (int k = num_eq_active_; k < iq_; ++k) {
          if (r[k] > 0.0) {
            const double ratio = u_[k] / r[k];
            if (ratio < t1) {
              t1 = ratio;
              l  = k;
            }
          }
        }
        const bool dependent = is_dependent(d);
        const double t2      = dependent ? kInf : -s / d.tail(n - iq_).squaredNorm();
        const double t       = std::min(t1, t2);
        if (t == kInf) return QpStatus::Infeasible;

        if (t2 == kInf) {
          for (int k = 0; k < iq_; ++k) u_[k] -= t * r[k];
          u_plus += t;
          is_active[static_cast<std::size_t>(active_[l])] = 0;
          drop(l);
          continue;
        }

        x_ += t * z;
        x_scale_ = std::max(x_scale_, x_.cwiseAbs().maxCoeff());
        for (int k = 0; k < iq_; ++k) u_[k] -= t * r[k];
        u_plus += t;

        if (t == t2) {
          if (!add_constraint(d)) return QpStatus::Infeasible;
          active_.push_back(p);
          u_.push_back(u_plus);
          is_active[static_cast<std::size_t>(p)] = 1;
          break;
        }
        is_active[static_cast<std::size_t>(active_[l])] = 0;
        drop(l);
      }
    }
    return QpStatus::IterLimit;
  }

  const Eigen::VectorXd & x() const { return x_; }
  int iterations() const { return iterations_; }

  /// (row, multiplier) pairs for the final active set; equalities first.
  std::vector<std::pair<const GiRow *, double>> active_multipliers() const
  {
    std::vector<std::pair<const GiRow *, double>> out;
    for (int k = 0; k < iq_; ++k) {
      const GiRow * row = k < num_eq_active_ ? &eqs_[static_cast<std::size_t>(active_[k])] : &ineqs_[static_cast<std::size_t>(active_[k])];
      out.emplace_back(row, u_[k]);
    }
    return out;
  }

private:
  QpStatus check_trivial()
  {
    for (const auto & e : eqs_)
      if (std::abs(e.b) > tol(e)) return QpStatus::Infeasible;
    for (const auto & i : ineqs_)
      if (i.b > tol(i)) return QpStatus::Infeasible;
    return QpStatus::Optimal;
  }

  /// Feasibility tolerance, widened to the round-off carried by iterates that passed through large values.
  double tol(const GiRow & row) const
  {
    return std::max(opt_.tol_feas * std::max(1.0, std::abs(row.b)), 64.0 * std::numeric_limits<double>::epsilon() * row.norm * x_scale_);
  }

  static double dot(const GiRow & row, const Eigen::VectorXd & x)
  {
    double s = 0.0;
    for (const auto & [i, v] : row.n) s += v * x[i];
    return s;
  }

  bool is_dependent(const Eigen::VectorXd & d) const
  {
    const double tail = d.tail(n_ - iq_).norm();
    return tail <= 1e-11 * std::max(d.norm(), 1e-300);
  }

  /// d = J' n, z = J2 d2 (primal direction), r = R^{-1} d1 (dual direction).
  void step_direction(const GiRow & row, Eigen::VectorXd & d, Eigen::VectorXd & z, Eigen::VectorXd & r) const
  {
    d.setZero();
    for (const auto & [i, v] : row.n) d += v * j_.row(i).transpose();
    z = j_.rightCols(n_ - iq_) * d.tail(n_ - iq_);
    if (iq_ > 0) {
      r.head(iq_) = r_.topLeftCorner(iq_, iq_).triangularView<Eigen::Upper>().solve(d.head(iq_));
    }
  }

  bool add_constraint(Eigen::VectorXd & d)
  {
    const int n = n_;
    for (int j = n - 1; j > iq_; --j) {
      double cc = d[j - 1], ss = d[j];
      const double h = std::hypot(cc, ss);
      if (h == 0.0) continue;
      d[j] = 0.0;
      ss /= h;
      cc /= h;
      if (cc < 0.0) {
        cc     = -cc;
        ss     = -ss;
        d[j - 1] = -h;
      } else {
        d[j - 1] = h;
      }
      const double xny = ss / (1.0 + cc);
      for (int k = 0; k < n; ++k) {
        const double t1 = j_(k, j - 1);
        const double t2 = j_(k, j);
        j_(k, j - 1)    = t1 * cc + t2 * ss;
        j_(k, j)        = xny * (t1 + j_(k, j - 1)) - t2;
      }
    }
    ++iq_;
    r_.col(iq_ - 1).head(iq_) = d.head(iq_);
    if (std::abs(d[iq_ - 1]) <= std::numeric_limits<double>::epsilon() * r_norm_) return false;
    r_norm_ = std::max(r_norm_, std::abs(d[iq_ - 1]));
    return true;
  }

  /// Removes active-set position l and restores the triangular factor.
  void drop(int l)
  {
    active_.erase(active_.begin() + l);
    u_.erase(u_.begin() + l);
    const int n = n_;
    for (int c = l; c < iq_ - 1; ++c) r_.col(c) = r_.col(c + 1);
    r_.col(iq_ - 1).setZero();
    --iq_;
    for (int j = l; j < iq_; ++j) {
      double cc = r_(j, j), ss = r_(j + 1, j);
      const double h = std::hypot(cc, ss);
      if (h == 0.0) continue;
      cc /= h;
      ss /= h;
      r_(j + 1, j) = 0.0;
      if (cc < 0.0) {
        r_(j, j) = -h;
        cc       = -cc;
        ss       = -ss;
      } else {
        r_(j, j) = h;
      }
      const double xny = ss / (1.0 + cc);
      for (int k = j + 1; k < iq_; ++k) {
        const double t1 = r_(j, k);
        const double t2 = r_(j + 1, k);
        r_(j, k)        = t1 * cc + t2 * ss;
        r_(j + 1, k)    = xny * (t1 + r_(j, k)) - t2;
      }
      for (int k = 0; k < n; ++k) {
        const double t1 = j_(k, j);
        const double t2 = j_(k, j + 1);
        j_(k, j)        = t1 * cc + t2 * ss;
        j_(k, j + 1)    = xny * (j_(k, j) + t1) - t2;
      }
    }
  }

  Eigen::MatrixXd g_;
  Eigen::VectorXd a_;
  std::vector<GiRow> eqs_, ineqs_;
  QpOptions opt_;

  int n_{0};
  Eigen::MatrixXd j_, r_;
  Eigen::VectorXd x_;
  int iq_{0};
  int num_eq_active_{0};
  double r_norm_{1.0};
  double x_scale_{0.0};  ///< largest |x_i| over all iterates
  std::vector<int> active_;
  std::vector<double> u_;
  int iterations_{0};
};

}  // namespace detail

/// Solves the relaxation of `sys` with variable bounds replaced by [lo, hi].
inline QpSolution solve_qp(const ConstraintSystem & sys, std::span<const double> lo, std::span<const double> hi, const QpOptions & opt = {})
{
  const int n_all = sys.num_vars();
  QpSolution sol;
  sol.x = Eigen::VectorXd::Zero(n_all);
  sol.constraint_duals = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sys.constraints().size()));
  sol.bound_duals      = Eigen::VectorXd::Zero(n_all);

  // free / fixed split
  std::vector<int> pos(static_cast<std::size_t>(n_all), -1);
  std::vector<int> free_vars;
  for (int i = 0; i < n_all; ++i) {
    const double l = lo[static_cast<std::size_t>(i)], h = hi[static_cast<std::size_t>(i)];
    if (l > h + opt.tol_feas) return sol;
    if (h - l <= 1e-12) {
      sol.x[i] = 0.5 * (l + h);
    } else {
      pos[static_cast<std::size_t>(i)] = static_cast<int>(free_vars.size());
      free_vars.push_back(i);
    }
  }
  const int n = static_cast<int>(free_vars.size());

  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd a(n);
  for (int k = 0; k < n; ++k) a[k] = sys.q_vec()[static_cast<std::size_t>(free_vars[static_cast<std::size_t>(k)])];
  for (const auto & [ij, v] : sys.q_upper()) {
    const int pi = pos[static_cast<std::size_t>(ij.first)], pj = pos[static_cast<std::size_t>(ij.second)];
    if (pi >= 0 && pj >= 0) {
      g(pi, pj) += v;
      if (pi != pj) g(pj, pi) += v;
    } else if (pi >= 0) {
      a[pi] += v * sol.x[ij.second];
    } else if (pj >= 0) {
      a[pj] += v * sol.x[ij.first];
    }
  }
  const double max_diag = n > 0 ? g.diagonal().cwiseAbs().maxCoeff() : 0.0;
  g.diagonal().array() += opt.ridge * std::max(1.0, max_diag);

  std::vector<detail::GiRow> eqs, ineqs;
  for (std::size_t c = 0; c < sys.constraints().size(); ++c) {
    const auto & lc = sys.constraints()[c];
    detail::GiRow row;
    double b = lc.bound;
    for (const auto & [i, v] : lc.coeffs) {
      const int p = pos[static_cast<std::size_t>(i)];
      if (p >= 0) {
        row.n.emplace_back(p, v);
      } else {
        b -= v * sol.x[i];
      }
    }
    const double tolc = opt.tol_feas * std::max(1.0, std::abs(lc.bound));
    if (row.n.empty()) {
      const bool ok = lc.sense == ConSense::Eq ? std::abs(b) <= tolc : b >= -tolc;
      if (!ok) return sol;
      continue;
    }
    row.origin = static_cast<int>(c);
    if (lc.sense == ConSense::Eq) {
      row.b    = b;
      row.sign = -1.0;
    } else {
      for (auto & e : row.n) e.second = -e.second;
      row.b    = -b;
      row.sign = 1.0;
    }
    double nn = 0.0;
    for (const auto & e : row.n) nn += e.second * e.second;
    row.norm = std::sqrt(nn);
    (lc.sense == ConSense::Eq ? eqs : ineqs).push_back(std::move(row));
  }
  for (int k = 0; k < n; ++k) {
    const int i = free_vars[static_cast<std::size_t>(k)];
    if (std::isfinite(lo[static_cast<std::size_t>(i)])) ineqs.push_back({{{k, 1.0}}, lo[static_cast<std::size_t>(i)], 1.0, -(i + 2), 1.0});
    if (std::isfinite(hi[static_cast<std::size_t>(i)])) ineqs.push_back({{{k, -1.0}}, -hi[static_cast<std::size_t>(i)], 1.0, -(i + 2), -1.0});
  }

  detail::GoldfarbIdnani gi(std::move(g), std::move(a), std::move(eqs), std::move(ineqs), opt);
  sol.status     = gi.solve();
  sol.iterations = gi.iterations();
  if (sol.status != QpStatus::Optimal) return sol;

  // clamp absorbs round-off from iterates that passed through large values
  for (int k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(free_vars[static_cast<std::size_t>(k)]);
    sol.x[static_cast<Eigen::Index>(i)] = std::clamp(gi.x()[k], lo[i], hi[i]);
  }
  for (const auto & [row, u] : gi.active_multipliers()) {
    if (row->origin >= 0) {
      sol.constraint_duals[row->origin] += row->sign * u;
    } else {
      sol.bound_duals[-(row->origin + 2)] += row->sign * u;
    }
  }
  sol.objective = sys.objective(sol.x);
  return sol;
}

inline QpSolution solve_qp(const ConstraintSystem & sys, const QpOptions & opt = {})
{
  return solve_qp(sys, sys.lower(), sys.upper(), opt);
}

}  // namespace stldrive
