#include <iostream>

#include "pverify/cli.hpp"

int main(int argc, char** argv) { return pverify::run_cli(argc, argv, std::cout, std::cerr); }
