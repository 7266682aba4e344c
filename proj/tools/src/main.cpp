// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "matchkit_cli/commands.hpp"

int main(int argc, char** argv) { return matchkit::cli::run(argc, argv, std::cout, std::cerr); }
