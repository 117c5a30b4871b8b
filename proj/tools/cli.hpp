#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ctz::cli {

// Runs one command line. Returns 0 on success, 2 for usage errors and 1 for
// everything else; failures print one JSON line to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ctz::cli
