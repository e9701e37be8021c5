#include <iostream>
#include <string>
#include <vector>

#include "lgb/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return lgb::run_cli(args, std::cout, std::cerr);
}
