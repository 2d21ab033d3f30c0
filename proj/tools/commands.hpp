#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace topogen::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kBackendError = 3, kNumericError = 4 };

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace topogen::cli
