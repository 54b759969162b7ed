#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace grcert::cli {

/// Runs the command-line tool in-process. `args` is the command line
/// without the program name. Returns the process exit code: 0 on success,
/// 1 when `certify` cannot prove robustness or `gradcheck` fails, 2 on
/// input or usage errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace grcert::cli
