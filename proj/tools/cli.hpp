#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace neurules::cli {

/// Exit codes: 0 success, 1 domain error, 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace neurules::cli
