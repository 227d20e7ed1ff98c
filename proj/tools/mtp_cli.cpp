// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "mtp/cli/app.hpp"

int main(int argc, char** argv) { return mtp::cli::run_cli(argc, argv, std::cout, std::cerr); }
