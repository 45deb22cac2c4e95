#pragma once

#include <iosfwd>

namespace msf::cli {

/// Process exit codes.
enum ExitCode : int { kOk = 0, kConfigError = 2, kDivergence = 3, kIoError = 4, kInternal = 1 };

/// Entry point of the `msf` tool. Errors are reported on `err` as one JSON object per line.
int run(int argc, char** argv, char** envp, std::ostream& out, std::ostream& err);

}  // namespace msf::cli
