#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace nmnet::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kRuntimeFailure = 3 };

/// Parses and runs one subcommand. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Expands `--config FILE` into `--key=value` tokens placed before the
/// remaining flags, so that explicit flags win. Lines are `key = value`;
/// blank lines and lines starting with '#' are ignored.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

}  // namespace nmnet::cli
