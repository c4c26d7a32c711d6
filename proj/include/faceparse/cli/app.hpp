#pragma once

#include <ostream>

namespace faceparse::cli {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitInternal = 3 };

/// Entry point of the `faceparse` command. Usage errors (bad flags, invalid
/// profiles) return 1, data errors 2, anything else 3.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace faceparse::cli
