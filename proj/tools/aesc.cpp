#include <vector>

#include "aes/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return aes::run_cli(args);
}
