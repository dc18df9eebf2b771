#include <iostream>
#include <string>
#include <vector>

#include "smoothlab/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return smoothlab::cli::run(args, std::cout, std::cerr);
}
