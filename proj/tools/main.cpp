#include <vector>
#include <string>

#include "edua/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return edua::cli::run(std::move(args));
}
