#include <iostream>

#include "sfat/cli/cli.hpp"

int main(int argc, char** argv) { return sfat::cli::run(argc, argv, std::cout, std::cerr); }
