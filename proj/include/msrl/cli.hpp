#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace msrl::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kDiverged = 3, kUnreliable = 4 };

/// Runs one command line (args[0] is the program name). Normal output goes
/// to `out`, logs and diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace msrl::cli
