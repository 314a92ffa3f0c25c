#pragma once

/**
 * @file
 * @brief Mixed-integer QP container shared by the encoder and the solvers:
 *
 *   min  1/2 x'Qx + q'x + c
 *   s.t. a_i'x <= b_i  or  a_i'x = b_i,   lo <= x <= hi,   x_j in {0, 1} for binaries.
 *
 * Also reads and writes a line-oriented text dump of the problem.
 */

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stldrive {

using VarRef = int;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class ConSense { Le, Eq };

struct LinearConstraint
{
  std::vector<std::pair<VarRef, double>> coeffs;
  double bound{0.0};
  ConSense sense{ConSense::Le};

  double lhs(const Eigen::VectorXd & x) const
  {
    double s = 0.0;
    for (const auto & [i, c] : coeffs) s += c * x[i];
    return s;
  }
};

class ConstraintSystem
{
public:
  VarRef add_var(double lo, double hi, std::string name = {})
  {
    if (lo > hi) throw std::invalid_argument("add_var: lo > hi for " + name);
    lo_.push_back(lo);
    hi_.push_back(hi);
    binary_.push_back(0);
    names_.push_back(sanitize(std::move(name), num_vars() - 1));
    q_vec_.push_back(0.0);
    return num_vars() - 1;
  }

  VarRef add_binary(std::string name = {})
  {
    const VarRef v = add_var(0.0, 1.0, std::move(name));
    binary_[static_cast<std::size_t>(v)] = 1;
    return v;
  }

  void add_constraint(std::vector<std::pair<VarRef, double>> coeffs, ConSense sense, double bound)
  {
    std::map<VarRef, double> merged;
    for (const auto & [i, c] : coeffs) {
      check_var(i);
      if (!std::isfinite(c)) throw std::invalid_argument("add_constraint: non-finite coefficient");
      merged[i] += c;
    }
    LinearConstraint lc;
    for (const auto & [i, c] : merged)
      if (c != 0.0) lc.coeffs.emplace_back(i, c);
    if (lc.coeffs.empty()) throw std::invalid_argument("add_constraint: all coefficients are zero");
    lc.bound = bound;
    lc.sense = sense;
    constraints_.push_back(std::move(lc));
  }

  void add_le(std::vector<std::pair<VarRef, double>> coeffs, double bound) { add_constraint(std::move(coeffs), ConSense::Le, bound); }

  void add_ge(std::vector<std::pair<VarRef, double>> coeffs, double bound)
  {
    for (auto & [i, c] : coeffs) c = -c;
    add_constraint(std::move(coeffs), ConSense::Le, -bound);
  }

  void add_eq(std::vector<std::pair<VarRef, double>> coeffs, double bound) { add_constraint(std::move(coeffs), ConSense::Eq, bound); }

  /// Adds v to Q(i, j) and, for i != j, to Q(j, i).
  void add_quadratic(VarRef i, VarRef j, double v)
  {
    check_var(i);
    check_var(j);
    if (i > j) std::swap(i, j);
    q_upper_[{i, j}] += v;
  }

  void add_linear(VarRef i, double v)
  {
    check_var(i);
    q_vec_[static_cast<std::size_t>(i)] += v;
  }

  void add_constant(double c) { obj_const_ += c; }

  /// Adds w * (sum_k a_k x_k - target)^2 to the objective.
  void add_squared_residual(const std::vector<std::pair<VarRef, double>> & terms, double target, double w)
  {
    for (std::size_t p = 0; p < terms.size(); ++p) {
      for (std::size_t r = p; r < terms.size(); ++r) {
        const double v = 2.0 * w * terms[p].second * terms[r].second;
        if (terms[p].first == terms[r].first) {
          add_quadratic(terms[p].first, terms[r].first, p == r ? v : 2.0 * v);
        } else {
          add_quadratic(terms[p].first, terms[r].first, v);
        }
      }
      add_linear(terms[p].first, -2.0 * w * target * terms[p].second);
    }
    add_constant(w * target * target);
  }

  void set_bounds(VarRef i, double lo, double hi)
  {
    check_var(i);
    if (lo > hi) throw std::invalid_argument("set_bounds: lo > hi");
    lo_[static_cast<std::size_t>(i)] = lo;
    hi_[static_cast<std::size_t>(i)] = hi;
  }

  int num_vars() const { return static_cast<int>(lo_.size()); }
  int num_binaries() const { return static_cast<int>(std::count(binary_.begin(), binary_.end(), 1)); }
  bool is_binary(VarRef i) const { return binary_[static_cast<std::size_t>(i)] != 0; }
  double lo(VarRef i) const { return lo_[static_cast<std::size_t>(i)]; }
  double hi(VarRef i) const { return hi_[static_cast<std::size_t>(i)]; }
  const std::vector<double> & lower() const { return lo_; }
  const std::vector<double> & upper() const { return hi_; }
  const std::string & name(VarRef i) const { return names_[static_cast<std::size_t>(i)]; }
  const std::vector<LinearConstraint> & constraints() const { return constraints_; }
  const std::map<std::pair<VarRef, VarRef>, double> & q_upper() const { return q_upper_; }
  const std::vector<double> & q_vec() const { return q_vec_; }
  double obj_const() const { return obj_const_; }

  std::vector<VarRef> binaries() const
  {
    std::vector<VarRef> out;
    for (int i = 0; i < num_vars(); ++i)
      if (is_binary(i)) out.push_back(i);
    return out;
  }

  Eigen::MatrixXd dense_q() const
  {
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(num_vars(), num_vars());
    for (const auto & [ij, v] : q_upper_) {
      q(ij.first, ij.second) += v;
      if (ij.first != ij.second) q(ij.second, ij.first) += v;
    }
    return q;
  }

  double objective(const Eigen::VectorXd & x) const
  {
    double f = obj_const_;
    for (int i = 0; i < num_vars(); ++i) f += q_vec_[static_cast<std::size_t>(i)] * x[i];
    for (const auto & [ij, v] : q_upper_) f += (ij.first == ij.second ? 0.5 : 1.0) * v * x[ij.first] * x[ij.second];
    return f;
  }

  /// Largest violation over constraints and bounds (0 when feasible).
  double max_violation(const Eigen::VectorXd & x) const
  {
    double worst = 0.0;
    for (const auto & c : constraints_) {
      const double r = c.lhs(x) - c.bound;
      worst = std::max(worst, c.sense == ConSense::Eq ? std::abs(r) : r);
    }
    for (int i = 0; i < num_vars(); ++i) worst = std::max({worst, lo(i) - x[i], x[i] - hi(i)});
    return worst;
  }

  double max_integrality_gap(const Eigen::VectorXd & x) const
  {
    double worst = 0.0;
    for (int i = 0; i < num_vars(); ++i)
      if (is_binary(i)) worst = std::max(worst, std::abs(x[i] - std::round(x[i])));
    return worst;
  }

  // -------------------------------------------------------------------------
  // Text dump:
  //   stldrive-lp 1
  //   vars <n>
  //   var <i> <C|B> <lo> <hi> <name>
  //   const <c>
  //   lin <i> <value>
  //   quad <i> <j> <value>          (i <= j; the Q(i,j) entry)
  //   con <le|eq> <bound> <nnz> <i> <a_i> ...
  //   end
  // Numbers use %.17g so a dump re-reads to the identical system.

  void write_lp(std::ostream & os) const
  {
    os << "stldrive-lp 1\n";
    os << "vars " << num_vars() << "\n";
    for (int i = 0; i < num_vars(); ++i)
      os << "var " << i << ' ' << (is_binary(i) ? 'B' : 'C') << ' ' << num(lo(i)) << ' ' << num(hi(i)) << ' ' << name(i) << '\n';
    if (obj_const_ != 0.0) os << "const " << num(obj_const_) << '\n';
    for (int i = 0; i < num_vars(); ++i)
      if (q_vec_[static_cast<std::size_t>(i)] != 0.0) os << "lin " << i << ' ' << num(q_vec_[static_cast<std::size_t>(i)]) << '\n';
    for (const auto & [ij, v] : q_upper_)
      if (v != 0.0) os << "quad " << ij.first << ' ' << ij.second << ' ' << num(v) << '\n';
    for (const auto & c : constraints_) {
      os << "con " << (c.sense == ConSense::Le ? "le" : "eq") << ' ' << num(c.bound) << ' ' << c.coeffs.size();
      for (const auto & [i, a] : c.coeffs) os << ' ' << i << ' ' << num(a);
      os << '\n';
    }
    os << "end\n";
  }

  std::string to_lp() const
  {
    std::ostringstream os;
    write_lp(os);
    return os.str();
  }

  static ConstraintSystem read_lp(std::istream & is)
  {
    ConstraintSystem sys;
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string & msg) { throw std::runtime_error("lp dump line " + std::to_string(lineno) + ": " + msg); };
    bool header = false, done = false;
    while (!done && std::getline(is, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::string tag;
      ls >> tag;
      if (!header) {
        int version = 0;
        if (tag != "stldrive-lp" || !(ls >> version) || version != 1) fail("expected 'stldrive-lp 1' header");
        header = true;
        continue;
      }
      if (tag == "vars") {
        continue;
      } else if (tag == "var") {
        int i;
        char kind;
        std::string slo, shi, nm;
        if (!(ls >> i >> kind >> slo >> shi >> nm) || i != sys.num_vars()) fail("malformed var");
        const double l = parse_num(slo), h = parse_num(shi);
        if (kind == 'B') {
          const VarRef v = sys.add_binary(nm);
          sys.set_bounds(v, l, h);
        } else if (kind == 'C') {
          sys.add_var(l, h, nm);
        } else {
          fail("unknown var kind");
        }
      } else if (tag == "const") {
        std::string v;
        if (!(ls >> v)) fail("malformed const");
        sys.obj_const_ = parse_num(v);
      } else if (tag == "lin") {
        int i;
        std::string v;
        if (!(ls >> i >> v) || i < 0 || i >= sys.num_vars()) fail("malformed lin");
        sys.q_vec_[static_cast<std::size_t>(i)] = parse_num(v);
      } else if (tag == "quad") {
        int i, j;
        std::string v;
        if (!(ls >> i >> j >> v) || i < 0 || j < i || j >= sys.num_vars()) fail("malformed quad");
        sys.q_upper_[{i, j}] = parse_num(v);
      } else if (tag == "con") {
        std::string sense, sb;
        std::size_t nnz;
        if (!(ls >> sense >> sb >> nnz) || (sense != "le" && sense != "eq")) fail("malformed con");
        LinearConstraint c;
        c.sense = sense == "le" ? ConSense::Le : ConSense::Eq;
        c.bound = parse_num(sb);
        for (std::size_t k = 0; k < nnz; ++k) {
          int i;
          std::string a;
          if (!(ls >> i >> a) || i < 0 || i >= sys.num_vars()) fail("malformed con term");
          c.coeffs.emplace_back(i, parse_num(a));
        }
        sys.constraints_.push_back(std::move(c));
      } else if (tag == "end") {
        done = true;
      } else {
        fail("unknown record '" + tag + "'");
      }
    }
    if (!header) throw std::runtime_error("lp dump: missing header");
    if (!done) throw std::runtime_error("lp dump: missing 'end'");
    return sys;
  }

  static ConstraintSystem from_lp(const std::string & text)
  {
    std::istringstream is(text);
    return read_lp(is);
  }

private:
  void check_var(VarRef i) const
  {
    if (i < 0 || i >= num_vars()) throw std::out_of_range("ConstraintSystem: bad VarRef " + std::to_string(i));
  }

  static std::string sanitize(std::string s, int idx)
  {
    if (s.empty()) return "v" + std::to_string(idx);
    for (auto & ch : s)
      if (ch == ' ' || ch == '\t' || ch == '\n') ch = '_';
    return s;
  }

  static std::string num(double v)
  {
    if (v == kInf) return "inf";
    if (v == -kInf) return "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }

  static double parse_num(const std::string & s)
  {
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::runtime_error("lp dump: bad number '" + s + "'");
    return v;
  }

  std::vector<double> lo_, hi_;
  std::vector<char> binary_;
  std::vector<std::string> names_;
  std::vector<LinearConstraint> constraints_;
  std::map<std::pair<VarRef, VarRef>, double> q_upper_;
  std::vector<double> q_vec_;
  double obj_const_{0.0};
};

}  // namespace stldrive
