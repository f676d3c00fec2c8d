#include <iostream>

#include "hsbt/cli_commands.hpp"

int main(int argc, char** argv) { return hsbt::run_cli(argc, argv, std::cout, std::cerr); }
