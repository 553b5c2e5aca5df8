#include <iostream>

#include "jointlab/cli.hpp"

int main(int argc, char** argv) { return jointlab::cli::run(argc, argv, std::cerr); }
