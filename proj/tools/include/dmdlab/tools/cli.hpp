#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace dmdlab::tools {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitAborted = 3;

/// Entry point shared by the executable and the tests. Tables go to `out`,
/// progress and diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// $DMDLAB_OUTPUT_ROOT, or "runs" when unset.
std::filesystem::path default_output_root();

}  // namespace dmdlab::tools
