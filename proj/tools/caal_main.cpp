#include <string>
#include <vector>

#include "caal/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return caal::cli::run_cli(std::move(args));
}
