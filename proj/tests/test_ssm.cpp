#include "doctest.h"

#include <cmath>
#include <random>

#include "mambahash/errors.hpp"
#include "mambahash/ops.hpp"
#include "mambahash/ssm.hpp"

using namespace mambahash;
using namespace mambahash::ssm;

namespace {

std::vector<double> randv(std::size_t n, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// y = scan over (B, L, D) with per-step (D, N) hold from scalar formulas
std::vector<double> loop_oracle(std::span<const double> x, std::span<const double> dt,
                                std::span<const double> b, std::span<const double> c,
                                std::span<const double> a, std::size_t B, std::size_t L,
                                std::size_t D, std::size_t N) {
  std::vector<double> y(B * L * D);
  for (std::size_t bi = 0; bi < B; ++bi)
    for (std::size_t d = 0; d < D; ++d) {
      std::vector<double> h(N, 0.0);
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t r = bi * L + t;
        double acc = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const auto z = discretize_zoh(a[d * N + n], b[r * N + n], dt[r * D + d]);
          h[n] = z.a_bar * h[n] + z.b_bar * x[r * D + d];
          acc += c[r * N + n] * h[n];
        }
        y[r * D + d] = acc;
      }
    }
  return y;
}

}  // namespace

TEST_CASE("zoh scalar case") {
  const auto z = discretize_zoh(-1.0, 1.0, std::log(2.0));
  CHECK(std::abs(z.a_bar - 0.5) < 1e-12);
  CHECK(std::abs(z.b_bar - 0.5) < 1e-12);
}

TEST_CASE("zoh zero-step limit") {
  const double dt = 1e-8;
  const auto z = discretize_zoh(-3.0, 2.0, dt);
  CHECK(std::abs(z.a_bar - 1.0) < 1e-6);
  CHECK(std::abs(z.b_bar) < 1e-6);
  CHECK(std::abs(z.b_bar / dt - 2.0) < 1e-6);
}

TEST_CASE("euler rule and contract errors") {
  const auto e = discretize_euler(-1.0, 3.0, 0.1);
  CHECK(e.a_bar == doctest::Approx(std::exp(-0.1)));
  CHECK(e.b_bar == doctest::Approx(0.3));
  CHECK_THROWS_AS(discretize_zoh(-1.0, 1.0, 0.0), ContractError);
  CHECK_THROWS_AS(discretize_zoh(-1.0, 1.0, -0.5), ContractError);
  CHECK(parse_discretization("euler") == Discretization::kEuler);
  CHECK_THROWS_AS(parse_discretization("bilinear"), ConfigError);
}

TEST_CASE("scan of x=[1,1,1] with a_bar=b_bar=0.5") {
  const SelectiveScanInputs in{Tensor::full({1, 3, 1}, 1.0), Tensor::full({1, 3, 1}, std::log(2.0)),
                               Tensor::full({1, 3, 1}, 1.0), Tensor::full({1, 3, 1}, 1.0)};
  const Tensor y = selective_scan(in, Tensor::from_data({1, 1}, {-1.0}));
  CHECK(std::abs(y.data()[0] - 0.5) < 1e-12);
  CHECK(std::abs(y.data()[1] - 0.75) < 1e-12);
  CHECK(std::abs(y.data()[2] - 0.875) < 1e-12);
}

TEST_CASE("identity recurrence gives prefix sums") {
  DiscreteSystem sys{1, 4, 1, 1, std::vector<double>(4, 1.0), std::vector<double>(4, 1.0)};
  const auto y = scan_discrete(sys, std::vector<double>{1, 2, 3, 4}, std::vector<double>(4, 1.0));
  CHECK(y == std::vector<double>{1, 3, 6, 10});
}

TEST_CASE("single step") {
  DiscreteSystem sys{1, 1, 1, 2, {0.3, 0.6}, {2.0, -1.0}};
  const auto y = scan_discrete(sys, std::vector<double>{1.5}, std::vector<double>{0.5, 4.0});
  CHECK(y[0] == doctest::Approx(0.5 * 2.0 * 1.5 + 4.0 * -1.0 * 1.5));
}

TEST_CASE("non-finite state is reported with its step") {
  DiscreteSystem sys{1, 3, 1, 1, {1.0, 1.0, 1.0}, {1e308, 1e308, 1e308}};
  try {
    scan_discrete(sys, std::vector<double>{1e308, 1e308, 1e308}, std::vector<double>{1, 1, 1});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("selective scan matches the loop oracle") {
  Rng rng(5);
  const std::size_t B = 2, L = 16, D = 4, N = 8;
  const auto x = randv(B * L * D, -1, 1, rng), dt = randv(B * L * D, 1e-3, 0.3, rng);
  const auto b = randv(B * L * N, -1, 1, rng), c = randv(B * L * N, -1, 1, rng);
  const auto a = randv(D * N, -3, -0.1, rng);
  const Tensor y = selective_scan({Tensor::from_data({B, L, D}, x), Tensor::from_data({B, L, D}, dt),
                                   Tensor::from_data({B, L, N}, b), Tensor::from_data({B, L, N}, c)},
                                  Tensor::from_data({D, N}, a));
  const auto ref = loop_oracle(x, dt, b, c, a, B, L, D, N);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(ref[i] - y.data()[i]) < 1e-10);
}

TEST_CASE("hippo init and stability") {
  const auto A = StateMatrixA::hippo(3, 4);
  const Tensor eff = A.effective();
  CHECK(eff.shape() == Shape{3, 4});
  for (std::size_t d = 0; d < 3; ++d)
    for (std::size_t n = 0; n < 4; ++n) CHECK(eff.data()[d * 4 + n] == doctest::Approx(-double(n + 1)));

  // bounded input over 1024 steps stays under the geometric bound
  const std::size_t L = 1024;
  Rng rng(9);
  const auto dt = randv(L, 1e-3, 0.1, rng);
  std::vector<double> abar(L), bbar(L);
  double bound = 0.0, amax = 0.0, bmax = 0.0;
  for (std::size_t t = 0; t < L; ++t) {
    const auto z = discretize_zoh(-1.0, 1.0, dt[t]);
    CHECK(z.a_bar > 0.0);
    CHECK(z.a_bar < 1.0);
    abar[t] = z.a_bar;
    bbar[t] = z.b_bar;
    amax = std::max(amax, z.a_bar);
    bmax = std::max(bmax, std::abs(z.b_bar));
  }
  bound = bmax / (1.0 - amax);
  std::vector<double> states;
  scan_discrete(DiscreteSystem{1, L, 1, 1, abar, bbar}, randv(L, -1, 1, rng), std::vector<double>(L, 1.0), &states);
  for (double h : states) CHECK(std::abs(h) <= bound + 1e-12);
}

TEST_CASE("ss1d shape and zero behaviour") {
  Rng rng(1);
  const auto p = Ss1dParams::init(8, 4, rng);
  CHECK(ss1d(Tensor::zeros({1, 9, 8}), p).shape() == Shape{1, 9, 8});
  const auto z = Ss1dParams::zeros(8, 4);
  const Tensor zy = ss1d(Tensor::zeros({1, 9, 8}), z);
  for (double v : zy.data()) CHECK(v == 0.0);
  CHECK(Ss1dParams::dt_rank(8) == 1);
  CHECK(Ss1dParams::dt_rank(33) == 3);
  // softplus(dt_bias) within [1e-3, 1e-1]
  for (double v : p.dt_bias.data()) {
    const double s = std::log1p(std::exp(v));
    CHECK(s >= 1e-3 - 1e-12);
    CHECK(s <= 1e-1 + 1e-12);
  }
}

TEST_CASE("ss1d equals manual projection, discretization and loop") {
  Rng rng(2);
  const std::size_t L = 7, D = 6, N = 5;
  const auto p = Ss1dParams::init(D, N, rng);
  const Tensor x = Tensor::from_data({1, L, D}, randv(L * D, -1, 1, rng));
  const Tensor y = ss1d(x, p);

  const std::size_t R = p.dt_down.dim(1);
  std::vector<double> dt(L * D), b(L * N, 0.0), c(L * N, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    std::vector<double> low(R, 0.0);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t i = 0; i < D; ++i) low[r] += x.data()[t * D + i] * p.dt_down.data()[i * R + r];
    for (std::size_t d = 0; d < D; ++d) {
      double z = p.dt_bias.data()[d];
      for (std::size_t r = 0; r < R; ++r) z += low[r] * p.dt_up.data()[r * D + d];
      dt[t * D + d] = std::log1p(std::exp(z));
    }
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t i = 0; i < D; ++i) {
        b[t * N + n] += x.data()[t * D + i] * p.w_b.data()[i * N + n];
        c[t * N + n] += x.data()[t * D + i] * p.w_c.data()[i * N + n];
      }
  }
  std::vector<double> a(D * N);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = -std::exp(p.a.param().data()[i]);
  const auto ref = loop_oracle(x.data(), dt, b, c, a, 1, L, D, N);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(ref[i] - y.data()[i]) < 1e-10);
}
