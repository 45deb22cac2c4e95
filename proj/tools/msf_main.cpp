#include <iostream>

#include "msf/cli/commands.hpp"

extern char** environ;

int main(int argc, char** argv) { return msf::cli::run(argc, argv, environ, std::cout, std::cerr); }
