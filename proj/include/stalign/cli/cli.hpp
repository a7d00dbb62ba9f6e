#pragma once

// Command-line front end: gen | train | embed | retrieve | probe | stats.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 data error
// (malformed files, exclusions, checkpoint mismatch), 4 I/O error.

#include <ostream>
#include <string>
#include <vector>

namespace stalign::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitIo = 4;

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stalign::cli
