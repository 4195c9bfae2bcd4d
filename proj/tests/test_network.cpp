#include "doctest.h"

#include <cmath>

#include "mambahash/errors.hpp"
#include "mambahash/grad_check.hpp"
#include "mambahash/network.hpp"
#include "mambahash/ops.hpp"

using namespace mambahash;

namespace {

std::vector<double> randv(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("enhancement ratio") {
  CHECK(enhancement_ratio(16) == 2.0);
  CHECK(enhancement_ratio(32) == 4.0);
  CHECK(enhancement_ratio(48) == 8.0);
  CHECK(enhancement_ratio(64) == 16.0);
  CHECK(enhancement_ratio(0) == 1.0);
  CHECK(afem_inner_width(512, 16.0) == 8192);
  CHECK(afem_inner_width(1, 0.1) == 1);
  CHECK(default_ciam_kernel(16) == 3);
  CHECK(default_ciam_kernel(32) == 3);
  CHECK(default_ciam_kernel(48) == 5);
  CHECK(default_ciam_kernel(64) == 5);
}

TEST_CASE("stem resolution") {
  Rng rng(1);
  const auto p = StemParams::init(16, 8, rng);
  CHECK(stem(Tensor::zeros({1, 32, 32, 3}), p).shape() == Shape{1, 8, 8, 8});
  CHECK_THROWS_AS(stem(Tensor::zeros({1, 30, 30, 3}), p), ConfigError);
}

TEST_CASE("stem gradient reaches every parameter") {
  Rng rng(2);
  const auto p = StemParams::init(4, 4, rng);
  const Tensor img = Tensor::from_data({1, 8, 8, 3}, randv(192, rng));
  NamedParams named;
  p.collect("", named);
  const auto f = [&] { return ops::sum(stem(img, p)); };
  for (auto& [name, t] : named) {
    const auto rep = grad_check(f, t, 1e-6, 1e-4, {0, t.numel() / 2, t.numel() - 1});
    CHECK_MESSAGE(rep.ok(), name);
    bool any = false;
    for (double g : rep.numeric) any = any || g != 0.0;
    CHECK_MESSAGE(any, name);
  }
}

TEST_CASE("downsample") {
  Rng rng(3);
  const auto p = DownsampleParams::init(16, 32, rng);
  const Tensor x = Tensor::from_data({1, 8, 8, 16}, randv(1024, rng));
  const Tensor y = downsample(x, p);
  CHECK(y.shape() == Shape{1, 4, 4, 32});
  CHECK_THROWS_AS(downsample(Tensor::zeros({1, 5, 4, 16}), p), ContractError);
  // not a strided crop of the input
  bool differs = false;
  for (std::size_t i = 0; i < 4 && !differs; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      if (y.data()[(i * 4 + j) * 32] != x.data()[((2 * i) * 8 + 2 * j) * 16]) differs = true;
  CHECK(differs);
}

TEST_CASE("afem") {
  Rng rng(4);
  auto p = AfemParams::init(6, 2.0, rng);
  CHECK(p.inner_width() == 12);
  const Tensor x = Tensor::from_data({1, 1, 1, 6}, randv(6, rng));
  const Tensor y = afem(x, p);
  CHECK(y.shape() == Shape{1, 1, 1, 6});

  // single pixel: depth-wise convs see only their centre taps
  const std::size_t E = 12;
  std::vector<double> out(6, 0.0);
  for (std::size_t e = 0; e < E; ++e) {
    double z = p.b_expand.data()[e];
    for (std::size_t d = 0; d < 6; ++d) z += x.data()[d] * p.w_expand.data()[d * E + e];
    double mixed = z * p.dw1_w.data()[e] + p.dw1_b.data()[e] + z * p.dw3_w.data()[4 * E + e] + p.dw3_b.data()[e] +
                   z * p.dw5_w.data()[12 * E + e] + p.dw5_b.data()[e];
    mixed = std::max(0.0, mixed);
    for (std::size_t d = 0; d < 6; ++d) out[d] += mixed * p.w_restore.data()[e * 6 + d];
  }
  for (std::size_t d = 0; d < 6; ++d) CHECK(y.data()[d] == doctest::Approx(out[d] + p.b_restore.data()[d]).epsilon(1e-13));

  NamedParams named;
  p.collect("", named);
  zero_params(named, "w_restore");
  zero_params(named, "b_restore");
  const Tensor z = afem(Tensor::from_data({2, 3, 3, 6}, randv(108, rng)), p);
  CHECK(z.shape() == Shape{2, 3, 3, 6});
  for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("tiny network forward") {
  const MambaHashNet net(ModelConfig::tiny(16), 3);
  Rng rng(5);
  auto one = randv(32 * 32 * 3, rng);
  std::vector<double> batch = one;
  batch.insert(batch.end(), one.begin(), one.end());
  NetworkTrace tr;
  const Tensor h = net.forward(Tensor::from_data({2, 32, 32, 3}, batch), &tr);
  CHECK(h.shape() == Shape{2, 16});
  for (double v : h.data()) {
    CHECK(v > -1.0);
    CHECK(v < 1.0);
  }
  for (std::size_t k = 0; k < 16; ++k) CHECK(h.data()[k] == h.data()[16 + k]);
  REQUIRE(tr.stage_shapes.size() == 4);
  for (std::size_t s = 0; s < 4; ++s) {
    CHECK(tr.stage_shapes[s][1] == (32 / 4) >> s);
    CHECK(tr.stage_shapes[s][3] == net.config().dims[s]);
  }
}

TEST_CASE("default configuration") {
  const ModelConfig c;
  CHECK(c.dims == std::array<std::size_t, 4>{64, 128, 348, 512});
  CHECK(c.depths == std::array<std::size_t, 4>{3, 4, 16, 3});
  CHECK(c.resolved_ciam_kernel() == 5);
  CHECK(ModelConfig::tiny(32).resolved_ciam_kernel() == 3);
  const MambaHashNet net(c, 0);
  // regression pin for the default 64-bit configuration
  CHECK(net.parameter_count() == 41034774u);
  const auto params = net.parameters();
  CHECK(params.front().first.rfind("stem.", 0) == 0);
  CHECK(params.back().first == "hash.b");
}

TEST_CASE("config text round trip and validation") {
  ModelConfig c = ModelConfig::tiny(48);
  c.discretization = ssm::Discretization::kEuler;
  c.gate = blocks::GateActivation::kIdentity;
  c.eta = 0.125;
  CHECK(ModelConfig::from_text(c.to_text()) == c);
  ModelConfig d;
  CHECK(d.set("bits", "32"));
  CHECK(d.hash_bits == 32);
  CHECK(d.set("ratio_mu", "1/32"));
  CHECK(d.ratio_mu == 1.0 / 32.0);
  CHECK_FALSE(d.set("nonsense", "1"));
  CHECK_THROWS_AS(d.set("hash_bits", "abc"), ConfigError);
  ModelConfig bad = ModelConfig::tiny(16);
  bad.dims[1] = 18;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ModelConfig::tiny(16);
  bad.ciam_kernel = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ModelConfig::tiny(16);
  bad.hash_bits = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
