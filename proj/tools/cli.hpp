#pragma once

#include <ostream>

namespace scmr::cli {

/// Entry point shared by the executable and the tests. Subcommands: estimate,
/// cv, simulate, oracle. Module errors are written to `err` as one JSON object
/// and mapped to a nonzero exit code (2 for errors, 3 when artifacts were
/// written but the solver did not converge).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace scmr::cli
