#include <iostream>

#include "saldrn/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return saldrn::run_cli(args, std::cout, std::cerr);
}
