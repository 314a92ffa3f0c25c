#include "stldrive/miqp.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

namespace stldrive {
namespace {

TEST(Miqp, NoBinariesEqualsQp)
{
  ConstraintSystem sys;
  const auto x = sys.add_var(-5, 5);
  const auto y = sys.add_var(-5, 5);
  sys.add_squared_residual({{x, 1.0}, {y, -1.0}}, 2.0, 1.0);
  sys.add_squared_residual({{y, 1.0}}, 1.0, 0.5);
  sys.add_le({{x, 1.0}}, 2.5);
  const auto qp = solve_qp(sys);
  const auto mi = solve_miqp(sys);
  ASSERT_EQ(mi.status, MiqpStatus::Optimal);
  EXPECT_EQ(mi.nodes_explored, 1);
  EXPECT_NEAR(mi.objective, qp.objective, 1e-12);
}

TEST(Miqp, SingleBinary)
{
  ConstraintSystem sys;
  const auto x = sys.add_binary("x");
  sys.add_squared_residual({{x, 1.0}}, 0.6, 1.0);
  const auto sol = solve_miqp(sys);
  ASSERT_EQ(sol.status, MiqpStatus::Optimal);
  EXPECT_EQ(sol.x[x], 1.0);
  EXPECT_NEAR(sol.objective, 0.16, 1e-9);
}

TEST(Miqp, Infeasible)
{
  ConstraintSystem sys;
  const auto a = sys.add_binary();
  const auto b = sys.add_binary();
  sys.add_ge({{a, 1.0}, {b, 1.0}}, 1.5);
  sys.add_le({{a, 1.0}, {b, -1.0}}, -0.5);
  sys.add_le({{b, 1.0}, {a, -1.0}}, -0.5);
  const auto sol = solve_miqp(sys);
  EXPECT_EQ(sol.status, MiqpStatus::Infeasible);
  EXPECT_FALSE(sol.has_solution);
}

TEST(Miqp, MatchesExhaustiveEnumeration)
{
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> nb(1, 12), nc(1, 4);
  for (int trial = 0; trial < 30; ++trial) {
    auto in         = oracle::random_instance(rng, nb(rng), nc(rng));
    const double ex = oracle::enumerate(in.sys, in.bins);
    MiqpOptions opt;
    opt.time_budget = 0.0;
    const auto sol  = solve_miqp(in.sys, opt);
    if (!std::isfinite(ex)) {
      EXPECT_EQ(sol.status, MiqpStatus::Infeasible);
      continue;
    }
    ASSERT_EQ(sol.status, MiqpStatus::Optimal) << trial;
    EXPECT_NEAR(sol.objective, ex, 1e-6) << trial;
    EXPECT_LE(in.sys.max_violation(sol.x), 1e-6);
    EXPECT_EQ(in.sys.max_integrality_gap(sol.x), 0.0);
  }
}

TEST(Miqp, HintDoesNotChangeOptimum)
{
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    auto in = oracle::random_instance(rng, 8, 3);
    MiqpOptions plain;
    plain.time_budget = 0.0;
    MiqpOptions hinted = plain;
    hinted.hint.assign(static_cast<std::size_t>(in.sys.num_vars()), std::nan(""));
    for (VarRef z : in.bins) hinted.hint[static_cast<std::size_t>(z)] = 1.0;
    const auto a = solve_miqp(in.sys, plain);
    const auto b = solve_miqp(in.sys, hinted);
    ASSERT_EQ(a.status, b.status);
    if (a.has_solution) EXPECT_NEAR(a.objective, b.objective, 1e-6);
  }
}

TEST(Miqp, ChildBoundsNeverDecrease)
{
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    auto in = oracle::random_instance(rng, 10, 3);
    MiqpOptions opt;
    opt.time_budget = 0.0;
    opt.record_tree = true;
    const auto sol  = solve_miqp(in.sys, opt);
    ASSERT_FALSE(sol.tree.empty());
    for (const auto & rec : sol.tree)
      if (rec.feasible) EXPECT_GE(rec.bound, rec.parent_bound - 1e-8 * std::max(1.0, std::abs(rec.parent_bound)));
  }
}

TEST(Miqp, NodeBudget)
{
  std::mt19937_64 rng(5);
  auto in = oracle::random_instance(rng, 12, 2);
  MiqpOptions opt;
  opt.time_budget = 0.0;
  opt.max_nodes   = 3;
  const auto sol  = solve_miqp(in.sys, opt);
  EXPECT_LE(sol.nodes_explored, 3);
  EXPECT_EQ(sol.status, MiqpStatus::TimedOut);

  // identical budgets give identical answers
  const auto again = solve_miqp(in.sys, opt);
  EXPECT_EQ(again.has_solution, sol.has_solution);
  if (sol.has_solution) EXPECT_EQ(again.x, sol.x);
}

TEST(Miqp, LpDumpRoundTrip)
{
  std::mt19937_64 rng(8);
  auto in          = oracle::random_instance(rng, 6, 3);
  in.sys.add_eq({{0, 1.0}, {1, 1.0}}, 0.1);
  const auto text  = in.sys.to_lp();
  const auto again = ConstraintSystem::from_lp(text);
  EXPECT_EQ(again.to_lp(), text);
  MiqpOptions opt;
  opt.time_budget = 0.0;
  const auto a = solve_miqp(in.sys, opt);
  const auto b = solve_miqp(again, opt);
  ASSERT_EQ(a.status, b.status);
  if (a.has_solution) EXPECT_EQ(a.objective, b.objective);
  EXPECT_THROW(ConstraintSystem::from_lp("stldrive-lp 1\nvars 1\nvar 0 X 0 1 a\nend\n"), std::runtime_error);
}

}  // namespace
}  // namespace stldrive
