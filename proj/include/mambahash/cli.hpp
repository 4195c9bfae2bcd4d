#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mambahash::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Entry point shared by the executable and tests. `args` excludes the
// program name. Diagnostics go to `err` as a single line.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mambahash::cli
