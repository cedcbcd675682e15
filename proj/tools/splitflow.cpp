#include "splitflow/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return splitflow::cli_main(argc, argv, std::cout, std::cerr); }
