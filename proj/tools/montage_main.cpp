#include "montage/cli.hpp"

int main(int argc, char **argv) {
  return montage::cli_dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
