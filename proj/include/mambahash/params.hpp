#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mambahash/tensor.hpp"

namespace mambahash {

using Rng = std::mt19937_64;

// Ordered (name, parameter) list. Order is the registration order and
// defines checkpoint layout and optimizer state layout.
using NamedParams = std::vector<std::pair<std::string, Tensor>>;

namespace init {

Tensor zeros(Shape shape);
Tensor ones(Shape shape);
Tensor constant(Shape shape, double value);
// U(-bound, bound).
Tensor uniform(Shape shape, double bound, Rng& rng);
// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual default for linear/conv.
Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace init

// Zeroes every parameter whose name starts with `prefix` (all if empty).
void zero_params(NamedParams& params, const std::string& prefix = {});
std::size_t count_values(const NamedParams& params);

}  // namespace mambahash
