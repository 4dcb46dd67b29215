#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ppimtt::cli {

enum ExitCode : int {
  kOk = 0,
  kInputError = 2,
  kDataError = 3,
  kInternalError = 4,
};

/// Runs one `ppi-mtt` invocation. `args` excludes the program name. Results
/// go to `out`, diagnostics to `err`; nothing throws past this boundary.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Thread budget: the requested count (0 = machine cores), capped by
/// PPI_MTT_THREADS when set.
std::size_t thread_budget(std::size_t requested);

}  // namespace ppimtt::cli
