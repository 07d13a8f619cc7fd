#include <iostream>

#include "freedrag/cli.hpp"

int main(int argc, char** argv) { return freedrag::cli_main(argc, argv, std::cout, std::cerr); }
