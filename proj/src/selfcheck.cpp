#include "mambahash/selfcheck.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "mambahash/checkpoint.hpp"
#include "mambahash/dataset.hpp"
#include "mambahash/errors.hpp"
#include "mambahash/grad_check.hpp"
#include "mambahash/mamba_blocks.hpp"
#include "mambahash/network.hpp"
#include "mambahash/objective.hpp"
#include "mambahash/ops.hpp"
#include "mambahash/parallel.hpp"
#include "mambahash/retrieval.hpp"
#include "mambahash/ssm.hpp"
#include "mambahash/trainer.hpp"

namespace mambahash::selfcheck {

namespace {

std::string fmt(const char* f, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<double> random_values(std::size_t n, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

Tensor random_leaf(Shape shape, double lo, double hi, Rng& rng) {
  Tensor t = Tensor::from_data(shape, random_values(shape_numel(shape), lo, hi, rng));
  t.set_requires_grad(true);
  return t;
}

// --- 1: scan oracle ------------------------------------------------------

// Plain per-step recurrence with the closed-form hold: a_bar = exp(dt a),
// b_bar = (a_bar - 1) / a * b.
std::vector<double> naive_scan(const std::vector<double>& x, const std::vector<double>& dt,
                               const std::vector<double>& b, const std::vector<double>& c,
                               const std::vector<double>& a, std::size_t B, std::size_t L,
                               std::size_t D, std::size_t N) {
  std::vector<double> y(B * L * D, 0.0);
  for (std::size_t bi = 0; bi < B; ++bi)
    for (std::size_t d = 0; d < D; ++d) {
      std::vector<double> h(N, 0.0);
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t row = (bi * L + t);
        double acc = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const double an = a[d * N + n];
          const double step = dt[row * D + d];
          const double abar = std::exp(step * an);
          const double bbar = (abar - 1.0) / an * b[row * N + n];
          h[n] = abar * h[n] + bbar * x[row * D + d];
          acc += c[row * N + n] * h[n];
        }
        y[row * D + d] = acc;
      }
    }
  return y;
}

CheckResult check_scan(const Options& opt) {
  Rng rng(opt.seed + 1);
  std::uniform_int_distribution<std::size_t> bd(1, 4), ld(1, 64), dd(1, 8), nd(1, 16);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t B = bd(rng), L = ld(rng), D = dd(rng), N = nd(rng);
    auto x = random_values(B * L * D, -2.0, 2.0, rng);
    auto dt = random_values(B * L * D, 1e-3, 0.5, rng);
    auto b = random_values(B * L * N, -1.5, 1.5, rng);
    auto c = random_values(B * L * N, -1.5, 1.5, rng);
    auto a = random_values(D * N, -4.0, -0.05, rng);
    const auto ref = naive_scan(x, dt, b, c, a, B, L, D, N);
    const ssm::SelectiveScanInputs in{Tensor::from_data({B, L, D}, x), Tensor::from_data({B, L, D}, dt),
                                      Tensor::from_data({B, L, N}, b), Tensor::from_data({B, L, N}, c)};
    const Tensor y = ssm::selective_scan(in, Tensor::from_data({D, N}, a));
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(ref[i] - y.data()[i]));
  }
  return {1, "", worst <= 1e-10, "100 shapes, max abs diff " + fmt("%.3e", worst)};
}

// --- 2: zero-order hold ------------------------------------------------------

CheckResult check_zoh(const Options&) {
  const auto z = ssm::discretize_zoh(-1.0, 1.0, std::log(2.0));
  bool ok = std::abs(z.a_bar - 0.5) <= 1e-12 && std::abs(z.b_bar - 0.5) <= 1e-12;
  const ssm::SelectiveScanInputs in{Tensor::from_data({1, 3, 1}, {1, 1, 1}),
                                    Tensor::full({1, 3, 1}, std::log(2.0)),
                                    Tensor::from_data({1, 3, 1}, {1, 1, 1}),
                                    Tensor::from_data({1, 3, 1}, {1, 1, 1})};
  const Tensor y = ssm::selective_scan(in, Tensor::from_data({1, 1}, {-1.0}));
  const double expect[3] = {0.5, 0.75, 0.875};
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(y.data()[i] - expect[i]));
  ok = ok && worst <= 1e-12;
  const double tiny = 1e-8;
  const auto lim = ssm::discretize_zoh(-1.0, 1.0, tiny);
  const double da = std::abs(lim.a_bar - 1.0), db = std::abs(lim.b_bar / tiny - 1.0);
  ok = ok && da <= 1e-6 && db <= 1e-6;
  return {2, "", ok,
          "a_bar=" + fmt("%.15g", z.a_bar) + " b_bar=" + fmt("%.15g", z.b_bar) + " y err " +
              fmt("%.1e", worst) + "; limit |a_bar-1|=" + fmt("%.1e", da) + " |b_bar/dt-b|=" + fmt("%.1e", db)};
}

// --- 3: gradient suite ---------------------------------------------------------

struct GradCase {
  std::string name;
  std::vector<Tensor> inputs;
  std::function<Tensor()> out;
  double tol = 1e-4;
  std::size_t max_coords = 24;
  double step = 1e-5;
};

struct GradOutcome {
  std::size_t cases = 0;
  std::size_t failed = 0;
  double worst = 0.0;
  std::string worst_name;
  std::vector<std::string> failures;
};

void run_grad_case(const GradCase& gc, Rng& rng, GradOutcome& res) {
  Tensor probe;
  {
    NoGradGuard guard;
    probe = gc.out();
  }
  const Tensor w = Tensor::from_data(probe.shape(), random_values(probe.numel(), -1.0, 1.0, rng));
  const auto f = [&gc, w] { return ops::sum(ops::mul(gc.out(), w)); };
  for (std::size_t k = 0; k < gc.inputs.size(); ++k) {
    Tensor theta = gc.inputs[k];
    std::vector<std::size_t> coords;
    if (theta.numel() > gc.max_coords) {
      std::uniform_int_distribution<std::size_t> pick(0, theta.numel() - 1);
      for (std::size_t i = 0; i < gc.max_coords; ++i) coords.push_back(pick(rng));
    }
    const GradCheckReport rep = grad_check(f, theta, gc.step, gc.tol, coords);
    ++res.cases;
    if (rep.max_rel_error > res.worst) {
      res.worst = rep.max_rel_error;
      res.worst_name = gc.name + "#" + std::to_string(k);
    }
    if (!rep.ok()) {
      ++res.failed;
      res.failures.push_back(gc.name + "#" + std::to_string(k) + " err " + fmt("%.2e", rep.max_rel_error));
    }
  }
}

std::vector<GradCase> op_cases(Rng& rng) {
  using namespace ops;
  std::vector<GradCase> cs;
  auto leaf = [&](Shape s, double lo = -1.0, double hi = 1.0) { return random_leaf(std::move(s), lo, hi, rng); };

  {
    Tensor a = leaf({2, 3}), b = leaf({2, 3});
    cs.push_back({"add", {a, b}, [=] { return add(a, b); }});
    cs.push_back({"mul", {a, b}, [=] { return mul(a, b); }});
    cs.push_back({"scale", {a}, [=] { return scale(a, -1.7); }});
  }
  {
    Tensor x = leaf({2, 3, 4}), s = leaf({2, 1, 4});
    cs.push_back({"mul_channels", {x, s}, [=] { return mul_channels(x, s); }});
  }
  {
    Tensor x = leaf({3, 5}, -2.0, 2.0);
    cs.push_back({"relu", {x}, [=] { return relu(x); }});
    cs.push_back({"tanh", {x}, [=] { return tanh(x); }});
    cs.push_back({"sigmoid", {x}, [=] { return sigmoid(x); }});
    cs.push_back({"silu", {x}, [=] { return silu(x); }});
    cs.push_back({"softplus", {x}, [=] { return softplus(x); }});
    cs.push_back({"exp", {x}, [=] { return ops::exp(x); }});
    cs.push_back({"sum", {x}, [=] { return scale(sum(x), 1.0); }});
    cs.push_back({"reshape", {x}, [=] { return reshape(x, {5, 3}); }});
  }
  {
    Tensor x = leaf({2, 3, 6}), y = leaf({2, 3, 2});
    cs.push_back({"slice_last", {x}, [=] { return slice_last(x, 1, 4); }});
    cs.push_back({"concat_last", {x, y}, [=] { return concat_last({x, y}); }});
    cs.push_back({"gather_rows", {x}, [=] { return gather_rows(x, {2, 0, 1}); }});
    cs.push_back({"reverse_sequence", {x}, [=] { return reverse_sequence(x); }});
    cs.push_back({"mean_rows", {x}, [=] { return mean_rows(x); }});
  }
  {
    Tensor x = leaf({2, 4, 4, 3});
    cs.push_back({"global_avg_pool", {x}, [=] { return global_avg_pool(x); }});
  }
  {
    Tensor x = leaf({2, 3, 4}), w = leaf({4, 5}), b = leaf({5});
    cs.push_back({"linear", {x, w, b}, [=] { return linear(x, w, b); }});
  }
  {
    Tensor x = leaf({2, 5, 5, 2}), w = leaf({3, 3, 2, 3}), b = leaf({3});
    cs.push_back({"conv2d_s2", {x, w, b}, [=] { return conv2d(x, w, b, 2, 1); }});
    Tensor w7 = leaf({7, 7, 2, 2}), b7 = leaf({2});
    cs.push_back({"conv2d_7x7", {x, w7, b7}, [=] { return conv2d(x, w7, b7, 2, 3); }});
  }
  {
    Tensor x = leaf({2, 4, 4, 3}), w = leaf({3, 3, 3}), b = leaf({3}), w5 = leaf({5, 5, 3});
    cs.push_back({"depthwise_conv2d", {x, w, b}, [=] { return depthwise_conv2d(x, w, b, 1, 1); }});
    cs.push_back({"depthwise_conv2d_5", {x, w5, b}, [=] { return depthwise_conv2d(x, w5, b, 1, 2); }});
  }
  {
    Tensor x = leaf({2, 1, 6}), w = leaf({5});
    cs.push_back({"conv1d_last", {x, w}, [=] { return conv1d_last(x, w); }});
  }
  {
    Tensor x = leaf({2, 3, 5}), g = leaf({5}), b = leaf({5});
    cs.push_back({"layer_norm", {x, g, b}, [=] { return layer_norm(x, g, b); }});
  }
  {
    Tensor x = leaf({2, 5, 3}), dt = leaf({2, 5, 3}, 0.05, 0.8), b = leaf({2, 5, 4}), c = leaf({2, 5, 4});
    Tensor a = leaf({3, 4}, -2.0, -0.2);
    cs.push_back({"selective_scan_zoh", {x, dt, b, c, a},
                  [=] { return ssm::selective_scan({x, dt, b, c}, a, ssm::Discretization::kZoh); }});
    cs.push_back({"selective_scan_euler", {x, dt, b, c, a},
                  [=] { return ssm::selective_scan({x, dt, b, c}, a, ssm::Discretization::kEuler); }});
    Tensor tiny_dt = leaf({2, 5, 3}, 1e-6, 1e-5);
    cs.push_back({"selective_scan_small_step", {x, tiny_dt, b, c, a},
                  [=] { return ssm::selective_scan({x, tiny_dt, b, c}, a); }, 1e-4, 24, 1e-8});
  }
  {
    auto p = ssm::Ss1dParams::init(4, 3, rng);
    Tensor x = leaf({2, 6, 4});
    NamedParams named;
    p.collect("", named);
    std::vector<Tensor> in{x};
    for (auto& [n, t] : named) in.push_back(t);
    cs.push_back({"ss1d", in, [=] { return ssm::ss1d(x, p); }});
  }
  {
    Tensor h = leaf({4, 6});
    const auto S = similarity_matrix({{0}, {1}, {0}, {1, 2}});
    cs.push_back({"pairwise_nll", {h}, [=] { return pairwise_nll(h, S); }});
    cs.push_back({"quantization_loss", {h}, [=] { return quantization_loss(h); }});
    cs.push_back({"total_loss", {h}, [=] { return total_loss(h, S, 0.05).total; }});
  }
  return cs;
}

std::vector<Tensor> all_tensors(const NamedParams& named) {
  std::vector<Tensor> out;
  for (const auto& [n, t] : named) out.push_back(t);
  return out;
}

std::vector<GradCase> block_cases(Rng& rng) {
  std::vector<GradCase> cs;
  blocks::BlockOptions bo;
  bo.n_state = 3;
  bo.ffn_ratio = 2;
  const std::size_t H = 2, W = 3, D = 8, Dg = D / blocks::kGroups;
  {
    auto p = blocks::VsssParams::init(Dg, bo, rng);
    Tensor x = random_leaf({2, H * W, Dg}, -1.0, 1.0, rng);
    NamedParams named;
    p.collect("", named);
    auto in = all_tensors(named);
    in.insert(in.begin(), x);
    for (auto dir : blocks::kAllDirections) {
      cs.push_back({"vsss_block_" + blocks::to_string(dir), in,
                    [=] { return blocks::vsss_block(x, {H, W, dir}, p, bo); }, 1e-4, 12});
    }
  }
  {
    auto p = blocks::CiamParams::init(D, 3, rng);
    Tensor x = random_leaf({2, H * W, D}, -1.0, 1.0, rng);
    NamedParams named;
    p.collect("", named);
    auto in = all_tensors(named);
    in.insert(in.begin(), x);
    cs.push_back({"ciam", in, [=] { return blocks::ciam(x, p); }});
  }
  {
    auto p = blocks::FfnParams::init(D, 2, rng);
    Tensor x = random_leaf({2, H * W, D}, -1.0, 1.0, rng);
    NamedParams named;
    p.collect("", named);
    auto in = all_tensors(named);
    in.insert(in.begin(), x);
    cs.push_back({"ffn", in, [=] { return blocks::ffn(x, p); }});
  }
  {
    auto p = blocks::MambaBlockParams::init(D, bo, rng);
    Tensor x = random_leaf({2, H * W, D}, -1.0, 1.0, rng);
    NamedParams named;
    p.collect("", named);
    auto in = all_tensors(named);
    in.insert(in.begin(), x);
    cs.push_back({"mamba_block", in, [=] { return blocks::mamba_block(x, H, W, p, bo); }, 1e-4, 8});
  }
  return cs;
}

GradOutcome network_composite(Rng& rng) {
  GradOutcome res;
  const MambaHashNet net(ModelConfig::tiny(16), 11);
  Tensor images = random_leaf({2, 32, 32, 3}, -2.0, 2.0, rng);
  const auto S = similarity_matrix({{0}, {1}});
  const auto f = [&] { return total_loss(net.forward(images), S, 0.05).total; };
  std::vector<Tensor> probes{images};
  const NamedParams named = net.parameters();
  for (std::size_t i = 0; i < named.size(); i += std::max<std::size_t>(1, named.size() / 10)) {
    probes.push_back(named[i].second);
  }
  probes.push_back(named.back().second);
  for (std::size_t k = 0; k < probes.size(); ++k) {
    std::uniform_int_distribution<std::size_t> pick(0, probes[k].numel() - 1);
    std::vector<std::size_t> coords;
    for (int i = 0; i < 3; ++i) coords.push_back(pick(rng));
    const auto rep = grad_check(f, probes[k], 1e-5, 1e-3, coords);
    ++res.cases;
    if (rep.max_rel_error > res.worst) {
      res.worst = rep.max_rel_error;
      res.worst_name = "network#" + std::to_string(k);
    }
    if (!rep.ok()) {
      ++res.failed;
      res.failures.push_back("network#" + std::to_string(k) + " err " + fmt("%.2e", rep.max_rel_error));
    }
  }
  return res;
}

CheckResult check_gradients(const Options& opt) {
  Rng rng(opt.seed + 3);
  GradOutcome res;
  for (const auto& gc : op_cases(rng)) run_grad_case(gc, rng, res);
  for (const auto& gc : block_cases(rng)) run_grad_case(gc, rng, res);
  const GradOutcome net = network_composite(rng);
  std::ostringstream os;
  os << res.cases << " op/block checks worst " << fmt("%.2e", res.worst) << " (" << res.worst_name
     << "); network " << net.cases << " probes worst " << fmt("%.2e", net.worst);
  for (const auto& f : res.failures) os << "; FAIL " << f;
  for (const auto& f : net.failures) os << "; FAIL " << f;
  return {3, "", res.failed == 0 && net.failed == 0, os.str()};
}

// --- 4: direction algebra ----------------------------------------------------

std::size_t oracle_index(std::size_t H, std::size_t W, blocks::ScanDirection dir, std::size_t k) {
  const std::size_t n = H * W;
  switch (dir) {
    case blocks::ScanDirection::kLeftToRight: return k;
    case blocks::ScanDirection::kRightToLeft: return n - 1 - k;
    case blocks::ScanDirection::kTopToBottom: return (k % H) * W + k / H;
    case blocks::ScanDirection::kBottomToTop: {
      const std::size_t j = n - 1 - k;
      return (j % H) * W + j / H;
    }
  }
  return 0;
}

CheckResult check_directions(const Options& opt) {
  Rng rng(opt.seed + 4);
  bool ok = true;
  std::string why;
  const std::pair<std::size_t, std::size_t> sizes[] = {{1, 1}, {1, 5}, {4, 1}, {2, 2}, {2, 3}, {3, 2}, {4, 7}, {8, 8}};
  for (auto [H, W] : sizes) {
    const std::size_t D = 3;
    Tensor grid = Tensor::from_data({2, H, W, D}, random_values(2 * H * W * D, -1, 1, rng));
    Tensor seq = ops::reshape(grid, {2, H * W, D});
    std::vector<std::vector<std::size_t>> perms;
    for (auto dir : blocks::kAllDirections) {
      const auto perm = blocks::direction_permutation(H, W, dir);
      for (std::size_t k = 0; k < perm.size(); ++k)
        if (perm[k] != oracle_index(H, W, dir, k)) {
          ok = false;
          why = "permutation oracle mismatch " + blocks::to_string(dir);
        }
      const Tensor back = blocks::restore_grid_order(blocks::reorder_for_direction(grid, H, W, dir), H, W, dir);
      if (!std::equal(back.data().begin(), back.data().end(), seq.data().begin())) {
        ok = false;
        why = "round trip failed " + blocks::to_string(dir);
      }
      perms.push_back(perm);
    }
    if (H >= 2 && W >= 2) {
      for (std::size_t i = 0; i < perms.size(); ++i)
        for (std::size_t j = i + 1; j < perms.size(); ++j)
          if (perms[i] == perms[j]) {
            ok = false;
            why = "permutations coincide at " + std::to_string(H) + "x" + std::to_string(W);
          }
    }
    // flipped grid scanned left-to-right equals each row of the original reversed
    std::vector<double> flipped(grid.numel());
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c)
          for (std::size_t d = 0; d < D; ++d)
            flipped[((b * H + r) * W + c) * D + d] = grid.data()[((b * H + r) * W + (W - 1 - c)) * D + d];
    const Tensor lr = blocks::reorder_for_direction(Tensor::from_data({2, H, W, D}, flipped), H, W,
                                                    blocks::ScanDirection::kLeftToRight);
    const auto orig = blocks::direction_permutation(H, W, blocks::ScanDirection::kLeftToRight);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c) {
          const std::size_t src = orig[r * W + (W - 1 - c)];
          for (std::size_t d = 0; d < D; ++d)
            if (lr.data()[((b * H * W) + r * W + c) * D + d] != seq.data()[(b * H * W + src) * D + d]) {
              ok = false;
              why = "flip identity failed";
            }
        }
  }
  return {4, "", ok, ok ? "8 grid sizes, 4 directions: round trip, oracle, flip, distinctness" : why};
}

// --- 5: CIAM contract ----------------------------------------------------------

CheckResult check_ciam(const Options& opt) {
  Rng rng(opt.seed + 5);
  bool ok = true;
  std::string why;
  double lo = 1.0, hi = 0.0;
  for (std::size_t D : {4, 8, 16}) {
    for (std::size_t k : {3, 5}) {
      auto p = blocks::CiamParams::init(D, k, rng);
      if (p.w_global.shape() != Shape{D, D} || p.conv_w.shape() != Shape{k}) {
        ok = false;
        why = "global weight is not D x D";
      }
      NamedParams named;
      p.collect("", named);
      for (const auto& [n, t] : named)
        if (t.rank() == 2 && t.shape() != Shape{D, D}) {
          ok = false;
          why = "unexpected reduction weight " + n;
        }
      Tensor x = Tensor::from_data({3, 5, D}, random_values(15 * D, -30.0, 30.0, rng));
      const Tensor s = blocks::ciam(x, p);
      for (double v : s.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        if (!(v > 0.0 && v < 1.0)) {
          ok = false;
          why = "score outside (0, 1)";
        }
      }
      NamedParams zero;
      p.collect("", zero);
      zero_params(zero);
      const Tensor z = blocks::ciam(x, p);
      for (double v : z.data())
        if (v != 0.5) {
          ok = false;
          why = "zero parameters did not give 0.5";
        }
    }
  }
  return {5, "", ok, ok ? "scores in [" + fmt("%.4f", lo) + ", " + fmt("%.4f", hi) + "], zero case 0.5, D x D global map" : why};
}

// --- 6: ratio law ----------------------------------------------------------

CheckResult check_ratio(const Options&) {
  bool ok = true;
  std::string got;
  const std::pair<std::size_t, double> table[] = {{16, 2.0}, {32, 4.0}, {48, 8.0}, {64, 16.0}};
  for (auto [k, lam] : table) {
    const double r = enhancement_ratio(k, 1.0 / 16.0, 0.0);
    if (r != lam) ok = false;
    got += (got.empty() ? "" : " ") + std::string("K=") + std::to_string(k) + ":" + fmt("%.17g", r);
  }
  return {6, "", ok, got};
}

// --- 7: loss values ----------------------------------------------------------

CheckResult check_loss(const Options&) {
  const double z0 = pair_nll(0.0, true), z1 = pair_nll(0.0, false);
  const double v8 = pair_nll(8.0, true);
  bool ok = z0 == std::log(2.0) && z1 == std::log(2.0);
  ok = ok && std::abs(v8 - 3.3540e-4) <= 1e-8;
  Tensor binary = Tensor::from_data({2, 4}, {1, -1, 1, 1, -1, -1, 1, -1});
  const double q = quantization_loss(binary).item();
  ok = ok && q == 0.0;
  bool finite = true;
  for (bool s : {true, false})
    for (double th : {512.0, -512.0}) finite = finite && std::isfinite(pair_nll(th, s));
  Tensor big = Tensor::full({2, 1024}, 1.0);
  const double tensor_big = pairwise_nll(big, similarity_matrix({{0}, {1}})).item();
  finite = finite && std::isfinite(tensor_big);
  ok = ok && finite;
  return {7, "", ok,
          "theta=0 -> " + fmt("%.17g", z0) + ", theta=8 -> " + fmt("%.6e", v8) + ", quant(binary)=" +
              fmt("%g", q) + ", |theta|=512 finite=" + (finite ? "yes" : "no")};
}

// --- 8: Hamming identity -------------------------------------------------------

CheckResult check_hamming(const Options& opt) {
  Rng rng(opt.seed + 8);
  std::bernoulli_distribution coin(0.5);
  bool ok = true;
  std::size_t pairs = 0;
  for (std::size_t K : {16, 32, 48, 64}) {
    const std::size_t n = 10000;
    std::vector<double> a(n * K), b(n * K);
    for (auto& v : a) v = coin(rng) ? 1.0 : -1.0;
    for (auto& v : b) v = coin(rng) ? 1.0 : -1.0;
    const PackedCodes pa = binarize_pack(a, n, K), pb = binarize_pack(b, n, K);
    for (std::size_t i = 0; i < n; ++i) {
      long dot = 0;
      for (std::size_t k = 0; k < K; ++k) dot += static_cast<long>(a[i * K + k] * b[i * K + k]);
      const long expect2 = static_cast<long>(K) - dot;  // twice the distance
      const std::size_t d = hamming_distance(pa.code(i), pb.code(i));
      if (static_cast<long>(2 * d) != expect2) ok = false;
      ++pairs;
    }
  }
  return {8, "", ok, std::to_string(pairs) + " pairs over K in {16,32,48,64}"};
}

// --- 9: MAP oracle ------------------------------------------------------------

double brute_map(const std::vector<std::vector<int>>& q, const std::vector<LabelSet>& ql,
                 const std::vector<std::vector<int>>& db, const std::vector<LabelSet>& dl, std::size_t topk) {
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    std::vector<std::pair<long, std::size_t>> order;
    bool any = false;
    for (std::size_t j = 0; j < db.size(); ++j) {
      long dist = 0;
      for (std::size_t k = 0; k < q[i].size(); ++k) dist += q[i][k] != db[j][k];
      order.emplace_back(dist, j);
      if (labels_intersect(ql[i], dl[j])) any = true;
    }
    if (!any) continue;
    std::sort(order.begin(), order.end());
    const std::size_t cut = topk == 0 ? order.size() : std::min(topk, order.size());
    double hits = 0.0, ap = 0.0;
    for (std::size_t r = 0; r < cut; ++r)
      if (labels_intersect(ql[i], dl[order[r].second])) {
        hits += 1.0;
        ap += hits / static_cast<double>(r + 1);
      }
    total += hits > 0 ? ap / hits : 0.0;
    ++counted;
  }
  return counted ? total / static_cast<double>(counted) : 0.0;
}

CheckResult check_map(const Options& opt) {
  Rng rng(opt.seed + 9);
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<std::uint32_t> label(0, 4);
  const std::size_t K = 12, nq = 100, ndb = 100;
  auto make = [&](std::size_t n, std::vector<std::vector<int>>& codes, std::vector<LabelSet>& labels) {
    std::vector<double> flat;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<int> c(K);
      for (auto& v : c) {
        v = coin(rng) ? 1 : -1;
        flat.push_back(v);
      }
      codes.push_back(c);
      LabelSet l{label(rng)};
      if (coin(rng)) l.push_back(label(rng) + 5);
      labels.push_back(l);
    }
    return binarize_pack(flat, n, K, labels);
  };
  std::vector<std::vector<int>> qc, dc;
  std::vector<LabelSet> ql, dl;
  const PackedCodes q = make(nq, qc, ql), db = make(ndb, dc, dl);
  double worst = 0.0;
  for (std::size_t topk : {0, 1, 10, 37, 100, 250}) {
    const double ref = brute_map(qc, ql, dc, dl, topk);
    worst = std::max(worst, std::abs(ref - mean_average_precision(q, db, topk).map));
  }
  // ranking relevance [1, 0, 1]
  const PackedCodes hq = binarize_pack(std::vector<double>{1, 1, 1, 1}, 1, 4, {{0}});
  const PackedCodes hdb = binarize_pack(std::vector<double>{1, 1, 1, 1, 1, 1, 1, -1, 1, 1, -1, -1}, 3, 4,
                                        {{0}, {1}, {0}});
  const double hand = mean_average_precision(hq, hdb, 0).map;
  const bool ok = worst <= 1e-12 && std::abs(hand - 5.0 / 6.0) <= 1e-12;
  return {9, "", ok, "max |indexed - brute| " + fmt("%.1e", worst) + ", hand case AP " + fmt("%.15f", hand)};
}

// --- 10: end-to-end overfit ------------------------------------------------------

CheckResult check_overfit(const Options& opt) {
  SynthOptions so;
  so.classes = 2;
  so.side = 32;
  so.train_per_class = 32;
  so.query_per_class = 0;
  so.database_per_class = 0;
  so.seed = opt.seed + 10;
  const Dataset data = synth_dataset(so);
  const ModelConfig mc = ModelConfig::tiny(16);
  TrainConfig tc;
  tc.learning_rate = 1e-4;
  tc.weight_decay = 1e-7;
  tc.batch_size = 16;
  tc.seed = opt.seed + 10;
  tc.augment = false;
  MambaHashNet net(mc, tc.seed);
  Trainer trainer(net, tc);
  std::vector<TrainingItem> items;
  const auto idx = data.indices(Split::kTrain);
  for (auto i : idx) items.push_back({&data.records[i].image, data.records[i].labels});

  double map = 0.0, quant = 0.0;
  std::size_t epoch = 0;
  for (; epoch < opt.overfit_epochs; ++epoch) {
    const auto losses = trainer.train_epoch(items);
    quant = 0.0;
    for (const auto& l : losses) quant += l.quant_term;
    quant /= static_cast<double>(items.size());
    if ((epoch + 1) % 5 == 0 || epoch + 1 == opt.overfit_epochs) {
      const PackedCodes codes = encode_records(net, data, idx);
      map = mean_average_precision(codes, codes, 0).map;
      if (map >= 0.95 && quant < 0.1 * static_cast<double>(mc.hash_bits)) {
        ++epoch;
        break;
      }
    }
  }
  const bool ok = map >= 0.95 && quant < 0.1 * static_cast<double>(mc.hash_bits);
  return {10, "", ok,
          "epochs=" + std::to_string(epoch) + " train MAP@all=" + fmt("%.4f", map) + " quant/code=" + fmt("%.4f", quant)};
}

// --- 11: reproducibility ---------------------------------------------------------

struct RunArtifacts {
  std::vector<double> losses;
  std::vector<std::uint8_t> codes;
};

RunArtifacts deterministic_run(std::uint64_t seed) {
  SynthOptions so;
  so.train_per_class = 6;
  so.query_per_class = 2;
  so.database_per_class = 4;
  so.seed = seed;
  const Dataset data = synth_dataset(so);
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.batch_size = 4;
  tc.epochs = 2;
  tc.seed = seed;
  const TrainOutcome run = train_model(ModelConfig::tiny(16), tc, data);
  RunArtifacts out;
  for (const auto& r : run.history) out.losses.push_back(r.loss.total);
  out.codes = encode_code_file(encode_records(run.net, data, data.indices(Split::kDatabase)));
  return out;
}

CheckResult check_reproducible(const Options& opt) {
  const bool was = deterministic();
  set_deterministic(true);
  const RunArtifacts a = deterministic_run(opt.seed + 11);
  const RunArtifacts b = deterministic_run(opt.seed + 11);
  set_deterministic(was);
  const bool same_loss = a.losses.size() == b.losses.size() &&
                         std::equal(a.losses.begin(), a.losses.end(), b.losses.begin(),
                                    [](double x, double y) { return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y); });
  const bool same_codes = a.codes == b.codes;
  return {11, "", same_loss && same_codes && !a.losses.empty(),
          std::to_string(a.losses.size()) + " batch losses identical=" + (same_loss ? "yes" : "no") +
              ", code files identical=" + (same_codes ? "yes" : "no") + " (" + std::to_string(a.codes.size()) + " bytes)"};
}

// --- 12: formats ----------------------------------------------------------------

template <typename F>
bool rejects(F&& f) {
  try {
    f();
  } catch (const FormatError&) {
    return true;
  } catch (const Error&) {
    return false;
  }
  return false;
}

CheckResult check_formats(const Options& opt) {
  Rng rng(opt.seed + 12);
  const MambaHashNet net(ModelConfig::tiny(32), opt.seed + 12);
  const auto bytes = encode_checkpoint(net);
  const MambaHashNet back = decode_checkpoint(bytes);
  bool ckpt_ok = encode_checkpoint(back) == bytes && back.config() == net.config();
  const auto pa = net.parameters(), pb = back.parameters();
  ckpt_ok = ckpt_ok && pa.size() == pb.size();
  for (std::size_t i = 0; ckpt_ok && i < pa.size(); ++i) {
    const auto x = pa[i].second.data(), y = pb[i].second.data();
    ckpt_ok = pa[i].first == pb[i].first && std::equal(x.begin(), x.end(), y.begin(), y.end());
  }

  const std::size_t n = 9, K = 80;
  std::vector<LabelSet> labels;
  for (std::size_t i = 0; i < n; ++i) labels.push_back({static_cast<std::uint32_t>(i % 3), 70000u + static_cast<std::uint32_t>(i)});
  const PackedCodes codes = binarize_pack(random_values(n * K, -1, 1, rng), n, K, labels);
  const auto cbytes = encode_code_file(codes);
  const bool codes_ok = decode_code_file(cbytes) == codes && encode_code_file(decode_code_file(cbytes)) == cbytes;

  auto corrupt = [](std::vector<std::uint8_t> b, std::size_t at) {
    b[at] ^= 0x5A;
    return b;
  };
  bool reject_ok = true;
  reject_ok = reject_ok && rejects([&] { decode_checkpoint(corrupt(bytes, 0)); });
  reject_ok = reject_ok && rejects([&] { decode_checkpoint(corrupt(bytes, 4)); });
  reject_ok = reject_ok && rejects([&] { decode_code_file(corrupt(cbytes, 1)); });
  reject_ok = reject_ok && rejects([&] { decode_code_file(corrupt(cbytes, 5)); });
  reject_ok = reject_ok && rejects([&] { decode_code_file(std::vector<std::uint8_t>(cbytes.begin(), cbytes.end() - 3)); });

  return {12, "", ckpt_ok && codes_ok && reject_ok,
          std::string("checkpoint ") + (ckpt_ok ? "exact" : "MISMATCH") + " (" + std::to_string(bytes.size()) +
              " bytes), code file " + (codes_ok ? "exact" : "MISMATCH") + ", corrupt magic/version " +
              (reject_ok ? "rejected" : "ACCEPTED")};
}

}  // namespace

std::string check_name(int id) {
  static const char* names[] = {"scan-oracle",    "zoh-correctness", "gradient-suite", "direction-algebra",
                                "ciam-contract",  "ratio-law",       "loss-values",    "hamming-identity",
                                "map-oracle",     "end-to-end-overfit", "reproducibility", "formats"};
  if (id < 1 || id > kCheckCount) throw ContractError("selfcheck: unknown check " + std::to_string(id));
  return names[id - 1];
}

CheckResult run_check(int id, const Options& opt) {
  const auto start = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    switch (id) {
      case 1: r = check_scan(opt); break;
      case 2: r = check_zoh(opt); break;
      case 3: r = check_gradients(opt); break;
      case 4: r = check_directions(opt); break;
      case 5: r = check_ciam(opt); break;
      case 6: r = check_ratio(opt); break;
      case 7: r = check_loss(opt); break;
      case 8: r = check_hamming(opt); break;
      case 9: r = check_map(opt); break;
      case 10: r = check_overfit(opt); break;
      case 11: r = check_reproducible(opt); break;
      case 12: r = check_formats(opt); break;
      default: throw ContractError("selfcheck: unknown check " + std::to_string(id));
    }
  } catch (const std::exception& e) {
    r = {id, "", false, std::string("exception: ") + e.what()};
  }
  r.id = id;
  r.name = check_name(id);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<CheckResult> run_all(const Options& opt, const std::function<void(const CheckResult&)>& on_result) {
  std::vector<CheckResult> out;
  for (int id = 1; id <= kCheckCount; ++id) {
    if (opt.quick && id == 10) continue;
    out.push_back(run_check(id, opt));
    if (on_result) on_result(out.back());
  }
  return out;
}

std::string format(const CheckResult& r) {
  char head[64];
  std::snprintf(head, sizeof head, "[%s] %02d %s: ", r.passed ? "PASS" : "FAIL", r.id, r.name.c_str());
  return head + r.detail + " (" + fmt("%.1f", r.seconds) + "s)";
}

}  // namespace mambahash::selfcheck
