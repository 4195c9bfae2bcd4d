#include <cstdlib>
#include <iostream>
#include <string>

#include "mambahash/selfcheck.hpp"

int main(int argc, char** argv) {
  mambahash::selfcheck::Options opt;
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) only = std::atoi(argv[++i]);
    else if (a == "--seed" && i + 1 < argc) opt.seed = std::strtoull(argv[++i], nullptr, 10);
  }
  int failed = 0;
  for (int id = 1; id <= mambahash::selfcheck::kCheckCount; ++id) {
    if (only != 0 && id != only) continue;
    const auto r = mambahash::selfcheck::run_check(id, opt);
    std::cout << mambahash::selfcheck::format(r) << std::endl;
    if (!r.passed) ++failed;
  }
  std::cout << (failed == 0 ? "acceptance: all criteria passed" : "acceptance: " + std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
