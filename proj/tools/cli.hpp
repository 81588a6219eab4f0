#pragma once

#include <string>
#include <vector>

namespace redus::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

inline constexpr const char* kVersion = "0.1.0";

/// Entry point shared by the executable and the tests. args[0] is the
/// program name.
int run(std::vector<std::string> args);

/// Reads a flat key=value file into "--key=value" tokens. Blank lines and
/// lines starting with '#' are skipped.
std::vector<std::string> config_tokens(const std::string& path);

}  // namespace redus::cli
