#include <iostream>

#include "spanrl/cli.hpp"

int main(int argc, char** argv) { return spanrl::cli::run(argc, argv, std::cout, std::cerr); }
