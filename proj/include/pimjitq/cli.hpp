// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace pimjitq::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the `pimjitq` tool. Results go to `out` unless --out is
// given; diagnostics go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pimjitq::cli
