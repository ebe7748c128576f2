#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace taxoclass::cli {

/// Runs the command line `args` (program name first). Returns the process
/// exit status: 0 success, 1 run failure, 2 usage or configuration error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace taxoclass::cli
