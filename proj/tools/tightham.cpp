#include <iostream>

#include "tightham/cli.hpp"

int main(int argc, char** argv) {
  return tightham::run_cli(argc, argv, std::cout, std::cerr);
}
