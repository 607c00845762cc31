// Copyright 2026 The linatt Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "cli.h"

int main(int argc, char** argv) {
  return linatt::cli::Run(argc, argv, std::cout, std::cerr);
}
