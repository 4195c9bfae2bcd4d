#pragma once

#include <cstddef>
#include <functional>

namespace mambahash {

// Worker cap: MBHH_THREADS if set, else hardware concurrency. Forced to 1
// in deterministic mode.
std::size_t worker_threads();
void set_deterministic(bool on);
bool deterministic();

// Runs fn(i) for i in [0, n) over contiguous chunks. Callers write results
// into per-index slots so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace mambahash
