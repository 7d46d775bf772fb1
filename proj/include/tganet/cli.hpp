#pragma once

#include <string>
#include <vector>

namespace tganet::cli {

/// Runs one subcommand; returns the process exit code. Errors are reported as
/// a single line on stderr.
int run(const std::vector<std::string>& args);

int dispatch(int argc, char** argv);

}  // namespace tganet::cli
