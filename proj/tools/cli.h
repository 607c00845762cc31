// Copyright 2026 The linatt Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef LINATT_TOOLS_CLI_H_
#define LINATT_TOOLS_CLI_H_

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "linatt/bench.h"

namespace linatt::cli {

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kUsageError = 2,
  kIoError = 3,
};

// "64x16,4x2" -> {(64,16), (4,2)}. Throws ContractViolation on bad input.
std::vector<std::pair<std::size_t, std::size_t>> ParseShapes(std::string_view text);
// "512,1024" -> {512, 1024}.
std::vector<std::size_t> ParseSizeList(std::string_view text);

// Flat key = value lines; '#' starts a comment. Recognized keys: n, c, r,
// reps, warmup, seed, csv, json, variants, directions, budget. Values
// overwrite the corresponding fields of `config`.
void ApplyConfigText(std::string_view text, BenchConfig& config);

// Entry point shared by the linatt binary and the tests.
int Run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace linatt::cli

#endif  // LINATT_TOOLS_CLI_H_
