#pragma once

#include <ostream>
#include <span>
#include <string>

namespace attnflow::cli {

// Runs the command line tool. `args` excludes the program name. Returns the
// process exit code: 0 on success, 1 on any failure (with a single
// "error: ..." line on `err`).
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace attnflow::cli
