// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace matchkit::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitData = 2,
  kExitNumeric = 3,
  kExitGradcheck = 4,
};

/// Entry point of the matchkit tool; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace matchkit::cli
