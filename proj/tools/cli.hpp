#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace xsdep::cli {

/// Runs one command line (without the program name). Returns 0 on success,
/// 1 on a usage or data error and 2 on a numerical failure; diagnostics go to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace xsdep::cli
