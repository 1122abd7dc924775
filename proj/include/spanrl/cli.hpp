#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spanrl::cli {

enum ExitCode : int {
  kSuccess = 0,
  kValidationFailure = 1,
  kInternalError = 2,
};

// Runs the command line in-process. argv[0] is the program name. Output files
// are written where the flags say; human-readable summaries go to `out` and
// warnings to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spanrl::cli
