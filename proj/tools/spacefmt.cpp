#include <iostream>

#include "spacefmt_cli.hpp"

int main(int argc, char** argv) {
  return spacefmt::cli::run_cli(argc, argv, std::cout, std::cerr);
}
