#include "deconf/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return deconf::run_cli(argc, argv, std::cout, std::cerr); }
