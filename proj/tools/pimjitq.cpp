// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "pimjitq/cli.hpp"

int main(int argc, char** argv) { return pimjitq::cli::run(argc, argv, std::cout, std::cerr); }
