#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace esapo::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kValidationFailure = 1, kNumericFailure = 2 };

/// Runs one subcommand. `args` excludes the program name. Exit codes: 0 on
/// success, 1 on validation errors (bad flags, bad input files), 2 on
/// numeric failures (divergence, failed gradient check).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace esapo::cli
