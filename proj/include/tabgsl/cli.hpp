// Command-line front end. Exposed as a library so tests can drive it
// in-process.
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace tabgsl {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitDiverged = 4,
};

/// Runs `tabgsl <args...>` (args exclude the program name) and returns the
/// process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tabgsl
