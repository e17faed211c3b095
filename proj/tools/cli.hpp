#pragma once

#include <string>
#include <vector>

namespace genprior::cli {

/// Exit codes: 0 success, 1 usage error, 2 runtime failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point shared by the `genprior` executable and the test suites.
/// `args` excludes the program name.
int run(const std::vector<std::string>& args);

int run(int argc, const char* const* argv);

const char* version();

} // namespace genprior::cli
