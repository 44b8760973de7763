#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sbanm::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

/// Runs one invocation. `args` excludes the program name and starts with the
/// subcommand. Results go to `out`, config echo, progress and errors to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sbanm::cli
