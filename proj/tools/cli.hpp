#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stratus::cli {

enum ExitCode { kOk = 0, kUsage = 2, kInput = 3, kRuntime = 4 };

/// Runs one `stratus` command line (args exclude the program name). Regular
/// output goes to `out`; failures are written to `err` as one JSON object.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stratus::cli
