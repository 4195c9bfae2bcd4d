#include "doctest.h"

#include <cmath>

#include "mambahash/errors.hpp"
#include "mambahash/grad_check.hpp"
#include "mambahash/objective.hpp"
#include "mambahash/params.hpp"

using namespace mambahash;

TEST_CASE("similarity matrix") {
  const auto s = similarity_matrix({{0}, {0}, {1}});
  const int want[3][3] = {{1, 1, 0}, {1, 1, 0}, {0, 0, 1}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(s(i, j) == want[i][j]);
  CHECK(similarity_matrix({{1, 2}, {2, 3}})(0, 1) == 1);
  const auto id = similarity_matrix({{1}, {2}, {3}, {4}});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(id(i, j) == (i == j ? 1 : 0));
  CHECK_THROWS_AS(similarity_matrix({}), DataError);
  CHECK_THROWS_AS(similarity_matrix({{1}, {}}), DataError);
}

TEST_CASE("pair likelihood values") {
  CHECK(pair_nll(0.0, true) == std::log(2.0));
  CHECK(pair_nll(0.0, false) == std::log(2.0));
  CHECK(std::abs(pair_nll(8.0, true) - 3.3540e-4) < 1e-8);
  CHECK(pair_nll(8.0, false) == doctest::Approx(8.00034).epsilon(1e-6));
  for (double t : {512.0, -512.0, 1e5, -1e5}) {
    CHECK(std::isfinite(pair_nll(t, true)));
    CHECK(std::isfinite(pair_nll(t, false)));
  }
}

TEST_CASE("pair likelihood monotonicity") {
  for (double t = -20.0; t < 20.0; t += 0.37) {
    CHECK(pair_nll(t + 0.01, true) < pair_nll(t, true));
    CHECK(pair_nll(t + 0.01, false) > pair_nll(t, false));
  }
}

TEST_CASE("pairwise nll over a batch") {
  const Tensor h = Tensor::full({2, 16}, 1.0);
  CHECK(pairwise_nll(h, similarity_matrix({{0}, {0}})).item() == doctest::Approx(std::log1p(std::exp(-8.0))));
  CHECK(pairwise_nll(Tensor::zeros({3, 4}), similarity_matrix({{0}, {1}, {0}})).item() ==
        doctest::Approx(3.0 * std::log(2.0)));
  CHECK_THROWS_AS(pairwise_nll(h, similarity_matrix({{0}, {0}, {1}})), DimensionError);
}

TEST_CASE("quantization loss") {
  CHECK(quantization_loss(Tensor::from_data({1, 1}, {0.5})).item() == 0.25);
  CHECK(quantization_loss(Tensor::from_data({1, 2}, {-0.25, 0.75})).item() == 0.625);
  CHECK(quantization_loss(Tensor::from_data({2, 2}, {1, -1, -1, 1})).item() == 0.0);
  // sign(0) = +1
  CHECK(quantization_loss(Tensor::from_data({1, 1}, {0.0})).item() == 1.0);
}

TEST_CASE("total loss composition") {
  const Tensor h = Tensor::from_data({2, 2}, {0.5, -0.25, 0.5, 0.75});
  const auto s = similarity_matrix({{0}, {1}});
  const auto r0 = total_loss(h, s, 0.0);
  CHECK(r0.breakdown.total == r0.breakdown.nll_term);
  CHECK(r0.breakdown.pair_count == 1);
  const auto r = total_loss(h, s, 0.05);
  const double quant = 0.25 + 0.5625 + 0.25 + 0.0625;
  CHECK(r.breakdown.quant_term == doctest::Approx(quant));
  CHECK(r.breakdown.total == doctest::Approx(r.breakdown.nll_term + 0.05 * quant));
  CHECK(r.total.item() == doctest::Approx(r.breakdown.total));
  const auto rb = total_loss(Tensor::from_data({2, 2}, {1, -1, -1, 1}), s, 0.05);
  CHECK(rb.breakdown.total == rb.breakdown.nll_term);
}

TEST_CASE("loss gradients") {
  Rng rng(1);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  std::vector<double> v(5 * 8);
  for (auto& x : v) x = u(rng);
  Tensor h = Tensor::from_data({5, 8}, v, true);
  const auto s = similarity_matrix({{0}, {1}, {0, 2}, {2}, {1}});
  CHECK(grad_check([&] { return total_loss(h, s, 0.05).total; }, h, 1e-6, 1e-6).ok());
}
