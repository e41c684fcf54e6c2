#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace natadiff {

inline constexpr const char* kToolVersion = "natadiff 0.1.0";

// Exit codes: 0 success, 1 runtime or validation failure, 2 usage or config
// error. `args` excludes the program name. When `run_dir` is non-null it
// receives the output directory of commands that create one.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            std::filesystem::path* run_dir = nullptr);

}  // namespace natadiff
