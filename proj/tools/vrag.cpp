#include "vrag/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return vrag::run_cli(argc, argv, std::cout, std::cerr); }
