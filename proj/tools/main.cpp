// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <string>
#include <vector>

#include "w1ot/cli.hpp"
#include "w1ot/runtime.hpp"

int main(int argc, char** argv) {
  w1ot::configure_allocator();
  std::vector<std::string> args(argv + 1, argv + argc);
  return w1ot::run_cli(args, std::cout, std::cerr);
}
