#include <iostream>

#include "upix/cli/cli.hpp"

int main(int argc, char** argv) { return upix::run_cli(argc, argv, std::cout, std::cerr); }
