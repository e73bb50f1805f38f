#pragma once

#include <iosfwd>

namespace hand_twin::cli {

/// Runs one subcommand. Exit codes: 0 success, 1 runtime failure, 2 usage.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hand_twin::cli
