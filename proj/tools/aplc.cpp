#include <iostream>

#include "aplc/cli.hpp"

int main(int argc, char** argv) { return aplc::run(argc, argv, std::cout, std::cerr); }
