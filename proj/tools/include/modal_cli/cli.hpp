#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace modal::cli {

/// Exit codes besides 0 and 1 (unexpected failure).
inline constexpr int kExitUsage = 2;
inline constexpr int kExitMissingInput = 3;
inline constexpr int kExitInvariant = 4;

/// Runs one subcommand. `args` excludes the program name.
int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace modal::cli
