#include <iostream>
#include <string>
#include <vector>

#include "lowres/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return lowres::cli::run(args, std::cout, std::cerr);
}
