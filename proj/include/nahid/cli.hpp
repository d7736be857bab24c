#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace nahid::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct CommandOutcome {
    int exit_code = kExitOk;
    std::vector<std::filesystem::path> artifacts;
};

/// `argv` excludes the program name. Results go to `out`, diagnostics and
/// usage text to `err`. Files are written only below `--out`.
CommandOutcome run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

} // namespace nahid::cli
