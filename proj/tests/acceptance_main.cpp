// Dedicated acceptance runner: executes the frozen statistical release
// checks and prints one pass/fail line per criterion. Exit code 0 iff all
// checks passed.

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <string>

#include "beepsim/acceptance.hpp"

int main(int argc, char** argv) {
  beepsim::acceptance::options opt;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--workers" && i + 1 < argc) {
      opt.workers = std::atoi(argv[++i]);
    } else if (arg == "--only" && i + 1 < argc) {
      opt.only.insert(std::atoi(argv[++i]));
    } else if (arg == "--seed" && i + 1 < argc) {
      opt.master_seed = std::strtoull(argv[++i], nullptr, 0);
    } else {
      std::cerr << "usage: acceptance_suite [--workers N] [--only K]... [--seed S]\n";
      return 2;
    }
  }
  const int failures = beepsim::acceptance::run_acceptance(opt, std::cout);
  return failures == 0 ? 0 : 1;
}
