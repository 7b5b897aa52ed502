#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace segbench::cli {

// Exit codes: 0 success, 1 failed benchmark cells, 2 usage/config errors.
constexpr int kExitOk = 0;
constexpr int kExitCellFailures = 1;
constexpr int kExitUsage = 2;

// Entry point behind the binary; in-process callable for tests. Results go
// to `out`, line-delimited JSON events to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace segbench::cli
