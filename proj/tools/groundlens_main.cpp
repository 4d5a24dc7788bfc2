// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "groundlens/cli.hpp"

int main(int argc, char** argv) { return groundlens::run_cli(argc, argv, std::cout, std::cerr); }
