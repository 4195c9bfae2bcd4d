#include "mambahash/params.hpp"

#include <algorithm>
#include <cmath>

namespace mambahash {

namespace init {

Tensor zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }

Tensor ones(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

Tensor constant(Shape shape, double value) { return Tensor::full(std::move(shape), value, true); }

Tensor uniform(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = dist(rng);
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  return uniform(std::move(shape), 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1))), rng);
}

}  // namespace init

void zero_params(NamedParams& params, const std::string& prefix) {
  for (auto& [name, t] : params) {
    if (name.rfind(prefix, 0) != 0) continue;
    auto d = t.mutable_data();
    std::fill(d.begin(), d.end(), 0.0);
  }
}

std::size_t count_values(const NamedParams& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

}  // namespace mambahash
