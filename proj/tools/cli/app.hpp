#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vaxsignal::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kConvergenceFailure = 3,
  kDataError = 4,
};

// Entry point of the `vaxsignal` tool. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vaxsignal::cli
