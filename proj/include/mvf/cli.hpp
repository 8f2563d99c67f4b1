#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mvf::cli {

enum ExitCode : int { ok = 0, failure = 1, config_error = 2, io_error = 3 };

/// Entry point of the mvfuse tool. Paths of written artifacts go to out,
/// diagnostics to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mvf::cli
