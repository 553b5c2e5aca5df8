#pragma once

#include <iosfwd>

namespace jointlab::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kInvalidInput = 2,
  kNotConverged = 3,
  kVerifyFailed = 4,
};

// Entry point shared by the executable and the tests. Logs go to `log`.
int run(int argc, const char* const* argv, std::ostream& log);

}  // namespace jointlab::cli
