#pragma once

#include <string>
#include <vector>

namespace debias {

// Dispatches one CLI invocation. Exit status: 0 success, 1 validation error,
// 2 runtime or numeric failure. Exposed so tests can drive subcommands
// in-process.
int cli_run(const std::vector<std::string>& args);

} // namespace debias
