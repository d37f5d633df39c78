#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dshift::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Parses `args` (without the program name), runs one command and returns the exit code.
/// Progress and errors go to `err`; results are written to files.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Merges `--config FILE` entries of the command's namespace into `args`; explicit flags win.
std::vector<std::string> apply_config(const std::vector<std::string>& args);

}  // namespace dshift::cli
