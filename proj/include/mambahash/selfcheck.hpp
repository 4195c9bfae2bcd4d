#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mambahash::selfcheck {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct Options {
  std::uint64_t seed = 20240;
  // Skips the end-to-end training check.
  bool quick = false;
  std::size_t overfit_epochs = 200;
};

inline constexpr int kCheckCount = 12;

std::string check_name(int id);
CheckResult run_check(int id, const Options& opt);
std::vector<CheckResult> run_all(const Options& opt,
                                 const std::function<void(const CheckResult&)>& on_result = {});

// "[PASS] 03 gradient-suite: ... (1.2s)"
std::string format(const CheckResult& r);

}  // namespace mambahash::selfcheck
