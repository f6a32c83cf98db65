#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace stratamatch::cli {

// Runs one subcommand. `args` excludes the program name. Returns 0 on
// success, 1 on a domain error ("Code: detail" on `err`), 2 on a usage error.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace stratamatch::cli
