#pragma once

// The gma3d command-line tool, callable in-process.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 I/O error,
// 4 numerical divergence, 5 verification failure.

#include <ostream>

namespace gma3d::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitDivergence = 4;
inline constexpr int kExitVerification = 5;

// Gradient check pass threshold on the max relative discrepancy.
inline constexpr double kGradCheckTolerance = 1e-6;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gma3d::cli
