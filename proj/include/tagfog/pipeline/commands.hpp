#pragma once

#include <string>
#include <vector>

namespace tagfog::pipeline {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitFormat = 2, kExitNumerical = 3 };

// Parses argv and dispatches to a subcommand. Diagnostics go to stderr as
// a single line.
int run_cli(int argc, char** argv);
// Arguments without the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace tagfog::pipeline
