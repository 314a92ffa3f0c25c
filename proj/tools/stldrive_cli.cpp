#include "stldrive/harness.hpp"
#include "stldrive/miqp.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>

using namespace stldrive;

namespace {

int cmd_run(const std::string & file, const RunFlags & flags, const std::string & out_dir)
{
  const Scenario sc = load_scenario(file);
  spdlog::info("scenario '{}': {} vehicles, {} features", sc.name, sc.vehicles.size(), sc.features.size());
  const auto res = run(sc, flags);
  write_outputs(res, out_dir);
  const auto & s = res.summary;
  spdlog::info("{} after {} steps: max tracking {:.3f} m, min distance {:.3f} m, median fps {:.1f}", s.termination, s.steps, s.max_tracking_error,
    s.min_distance, s.fps_median);
  std::cout << summary_json(s).dump(2) << "\n";
  return s.collision ? 2 : 0;
}

int cmd_solve(const std::string & file, double budget, long max_nodes)
{
  std::ifstream is(file);
  if (!is) throw std::runtime_error(file + ": cannot open");
  const auto sys = ConstraintSystem::read_lp(is);
  MiqpOptions opt;
  opt.time_budget = budget;
  opt.max_nodes   = max_nodes;
  const auto sol  = solve_miqp(sys, opt);
  std::cout << "status " << to_string(sol.status) << "\nnodes " << sol.nodes_explored << "\n";
  if (sol.has_solution) {
    std::cout << "objective " << format_g17(sol.objective) << "\n";
    for (int i = 0; i < sys.num_vars(); ++i) std::cout << sys.name(i) << " " << format_g17(sol.x[i]) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char ** argv)
{
  // STLDRIVE_LOG: trace, debug, info, warn (default), error, critical or off
  const char * level = std::getenv("STLDRIVE_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);

  CLI::App app{"STL-constrained MPC driving harness"};
  app.require_subcommand(1);

  auto * run_cmd = app.add_subcommand("run", "Run a scenario closed loop and write trace.csv, timing.csv and summary.json");
  std::string scenario_file, out_dir = "out";
  RunFlags flags;
  auto * seed_opt = run_cmd->add_option("--seed", flags.seed, "RNG seed (overrides the scenario)");
  run_cmd->add_option("scenario", scenario_file, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--out", out_dir, "Output directory");
  run_cmd->add_flag("--no-monitor", flags.no_monitor, "Apply the high-level plan without the low-level monitor");
  run_cmd->add_option("--horizon", flags.horizon, "MPC horizon H")->check(CLI::PositiveNumber);
  run_cmd->add_option("--max-steps", flags.max_steps, "Step limit")->check(CLI::PositiveNumber);
  run_cmd->add_flag("--realtime", flags.realtime, "Bound each solve by wall clock instead of the node budget");

  auto * solve_cmd = app.add_subcommand("solve", "Solve a dumped MIQP in LP format");
  std::string lp_file;
  double budget  = 0.0;
  long max_nodes = 0;
  solve_cmd->add_option("file", lp_file, "LP file")->required()->check(CLI::ExistingFile);
  solve_cmd->add_option("--time-budget", budget, "Wall-clock budget in seconds (0 = none)");
  solve_cmd->add_option("--max-nodes", max_nodes, "Node budget (0 = none)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*run_cmd) {
      flags.seed_set = seed_opt->count() > 0;
      return cmd_run(scenario_file, flags, out_dir);
    }
    return cmd_solve(lp_file, budget, max_nodes);
  } catch (const std::exception & e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
