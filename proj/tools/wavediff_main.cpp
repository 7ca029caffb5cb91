// Command-line front end. Subcommands are registered in cli.hpp; this file
// only owns the process boundary (argument vector in, exit code out).
#include <cstdio>
#include <exception>

#include "wavediff/cli.hpp"

int main(int argc, char** argv) {
  try {
    return wavediff::cli::run(argc, argv);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fatal: %s\n", e.what());
    return 1;
  }
}
