#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace chd::cli {

/// Runs one command line (without the program name). Returns the process
/// exit status; diagnostics go to `err`, progress and reports to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace chd::cli
