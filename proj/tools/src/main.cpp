#include <iostream>

#include "modal_cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return modal::cli::cli_run(args, std::cout, std::cerr);
}
