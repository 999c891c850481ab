#include <iostream>
#include <string>
#include <vector>

#include "hcdpi/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return hcdpi::cli_main(args, std::cout, std::cerr);
}
