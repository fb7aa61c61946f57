#pragma once

#include <ostream>
#include <span>
#include <string>

#include "json.hpp"
#include "treeopf/intervaldp.hpp"
#include "treeopf/oracle.hpp"
#include "treeopf/relaxation.hpp"

namespace treeopf {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitInputError = 1,
  kExitInfeasible = 2,
  kExitCapExceeded = 3,
  kExitInternal = 4,
};

nlohmann::json solve_json(const Network& net, const SolveResult& result);
nlohmann::json tighten_json(const Network& net, const BinaryTree& tree, const TightenResult& result);
nlohmann::json oracle_json(const OracleResult& result);
nlohmann::json transform_json(const BinaryTree& tree);

/// Runs one command line (without the program name). Documents go to `out`,
/// diagnostics to `err`.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace treeopf
