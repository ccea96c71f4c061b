#include <iostream>
#include <string>
#include <vector>

#include "bclab/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return bclab::cli::run(args, std::cout, std::cerr);
}
