// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>

namespace mtp::cli {

inline constexpr const char* kVersion = "mtp 0.1.0 (TNSR1, MTSD1)";

enum ExitCode : int { kOk = 0, kValidationFailure = 1, kUsageError = 2 };

/// Runs one command line; everything the command prints goes to `out` and
/// `err`. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mtp::cli
