#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gcf::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsage = 2,
  kDataValidation = 3,
  kNumericalFailure = 4,
};

// Runs the command line `gcf <args...>`; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gcf::cli
