#pragma once

// Command-line front end: hypoheat <subcommand> --config <path> [overrides].
// Exit codes: 0 all executed checks pass, 1 a check failed, 2 configuration
// or usage error, 3 numerical failure.

#include <ostream>
#include <string>
#include <vector>

namespace hypoheat {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

inline constexpr const char* kToolVersion = "0.1.0";

/// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hypoheat
