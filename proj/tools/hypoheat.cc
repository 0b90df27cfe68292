#include <iostream>

#include "hypoheat/cli.h"

int main(int argc, char** argv) {
  return hypoheat::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
