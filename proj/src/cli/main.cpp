#include <iostream>

#include "faceparse/cli/app.hpp"

int main(int argc, char** argv) { return faceparse::cli::run(argc, argv, std::cout, std::cerr); }
