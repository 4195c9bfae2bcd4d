#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "mambahash/tensor.hpp"

namespace mambahash {

struct GradCheckReport {
  // max over checked coordinates of |g_ad - g_fd| / max(1, |g_fd|)
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<std::size_t> flagged;  // coordinates whose error exceeds tol
  std::vector<double> analytic;
  std::vector<double> numeric;

  bool ok() const { return flagged.empty(); }
};

// Compares the tape gradient of `f` with respect to `theta` against central
// finite differences. `f` must rebuild its graph from the current value of
// `theta` on every call and return a scalar. When `coords` is non-empty only
// those flat indices are probed.
GradCheckReport grad_check(const std::function<Tensor()>& f, Tensor theta, double step,
                           double tol, const std::vector<std::size_t>& coords = {});

}  // namespace mambahash
