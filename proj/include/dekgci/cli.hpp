#pragma once

#include <string>
#include <vector>

namespace dekgci {

// Exit codes: 0 success, 2 input/config error, 3 training divergence.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitDiverged = 3;

// Full command-line entry point (prepare/train/eval/ablate/stats). Kept
// callable with an argv vector so tests can drive it in-process.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, const char* const* argv);

}  // namespace dekgci
