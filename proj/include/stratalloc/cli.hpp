#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace stratalloc::cli {

enum ExitCode : int {
  kSuccess = 0,
  kInfeasible = 1,
  kInvalidInput = 2,
  kRejected = 3,
};

/// Runs the command line `args` (without the program name) and returns the
/// process exit code. Reports go to `out`, diagnostics to `err`.
///
///   solve   --kind {mincost,lower,classical,upper} --input FILE... [scalars]
///   verify  --kind ... --input FILE --allocation FILE [scalars]
///   oracle  --kind {lower,mincost,upper} --input FILE [--compare] [--grid RES]
///
/// STRATALLOC_TOL, when set, replaces the default comparison tolerance.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace stratalloc::cli
