#include <iostream>

#include "survseq/cli.hpp"

int main(int argc, char** argv) { return survseq::run_cli(argc, argv, std::cout, std::cerr); }
