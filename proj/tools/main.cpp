#include <iostream>
#include <string>
#include <vector>

#include "gqa/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return gqa::cli::cli_main(args, std::cout, std::cerr);
}
