#pragma once

#include <string>
#include <vector>

namespace ipose::cli {

// Exit codes shared by all subcommands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitParse = 3;
inline constexpr int kExitContract = 4;
inline constexpr int kExitCalibration = 5;
inline constexpr int kExitDivergence = 6;

int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace ipose::cli
