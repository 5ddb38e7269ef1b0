#include "gradhom/cli_io.hpp"

#include <iostream>

int main(int argc, char** argv) { return gradhom::run_cli(argc, argv, std::cout, std::cerr); }
