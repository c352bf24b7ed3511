#include <string>
#include <vector>

#include "otta/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return otta::dispatch(args);
}
