#include <iostream>

#include "fedsim/cli.hpp"

int main(int argc, char** argv) { return fedsim::cli_main(argc, argv, std::cout, std::cerr); }
