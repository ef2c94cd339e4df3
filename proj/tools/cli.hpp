#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cgsam {

/// Exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitAborted = 3,
    kExitVersion = 4,
};

/// Runs `cgsam <args...>` (args excludes the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cgsam
