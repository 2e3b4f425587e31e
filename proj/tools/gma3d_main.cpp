#include <iostream>

#include "gma3d/cli/commands.hpp"

int main(int argc, char** argv) { return gma3d::cli::run(argc, argv, std::cout, std::cerr); }
