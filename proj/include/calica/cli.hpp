#pragma once

#include <string>
#include <vector>

namespace calica::cli {

/// Dispatch a command line. Returns 0 on success, 1 on user error
/// (arguments, missing or malformed inputs), 2 on internal error.
/// Diagnostics go to stderr; machine output goes to files named by flags
/// or to stdout.
int run(const std::vector<std::string>& args);

}  // namespace calica::cli
