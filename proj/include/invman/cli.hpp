#pragma once
/** @file cli.hpp
 *  @brief Batch front-end: subcommands check, region, manifold, audit,
 *  counterexample, persist and plotdata.
 *
 *  Exit codes: 0 success, 2 configuration error, 3 hypothesis failure,
 *  4 numeric failure. Every command ends with a `# summary` line.
 */

#include <ostream>
#include <string>
#include <vector>

#include "invman/systems.hpp"

namespace invman {

enum class OutputFormat { table, records };

struct RunConfig {
  std::string command;
  std::string system = "decoupled_toy";
  ParamMap params;
  int grid = 0;              ///< nodes per z-coordinate; 0 picks a per-command default
  double tol = 0.0;          ///< 0 picks a per-command default
  std::string out;
  OutputFormat format = OutputFormat::table;
  std::vector<int> orders;   ///< r values for check and region
  unsigned seed = 12345;
  std::string method;        ///< manifold: shoot | transform
  double c1 = 0.0;
  double cr = 0.0;
  double eta = 0.99;
  int pairs = 100;
  double resolution = 1e-4;
  double delta_cap = 0.5;
  bool with_hyp5 = false;
};

/// Applies `key = value` lines (comments start with #) on top of cfg.
Expected<RunConfig> apply_config_text(const std::string& text, RunConfig cfg);

/// Maps an error to exit code 2, 3 or 4.
int exit_code_for(ErrorCode code);

int run_command(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace invman
