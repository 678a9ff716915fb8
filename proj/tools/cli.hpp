#pragma once

#include <string>
#include <vector>

namespace sicnn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point of the `sicnn` tool; args exclude the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace sicnn
