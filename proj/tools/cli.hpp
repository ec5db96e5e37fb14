#pragma once

#include <iosfwd>

namespace macq::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kOtherError = 1;
inline constexpr int kValidationError = 2;
inline constexpr int kConvergenceError = 3;
inline constexpr int kInstability = 4;

/// Parses argv, dispatches to the solvers and writes CSV / JSON. CSV goes to
/// `out` unless redirected with --csv; errors go to `err` as one JSON line.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace macq::cli
