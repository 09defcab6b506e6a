// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace cgmi::cli {

/// Exit codes: 0 success, 2 configuration or validation error, 3 backend or
/// protocol error, 4 persona drift detected.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kExitDrift = 4;

int cli_main(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace cgmi::cli
