#include <iostream>

#include "manifold/cli.hpp"

int main(int argc, char** argv) { return manifold::cli::run(argc, argv, std::cout, std::cerr); }
