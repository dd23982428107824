#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sift::cli {

/// Runs one `sift` command. `args` excludes the program name. Returns the process exit status;
/// errors are reported on `err` and never escape as exceptions.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sift::cli
