#include <iostream>

#include "idyn/cli/commands.hpp"

int main(int argc, char** argv) { return idyn::cli::run(argc, argv, std::cout, std::cerr); }
