#include <iostream>

#include "grasp/commands.hpp"

int main(int argc, char** argv) { return grasp::cli::run(argc, argv, std::cout, std::cerr); }
