#include "mambahash/ssm.hpp"

#include <algorithm>
#include <cmath>

#include "mambahash/errors.hpp"
#include "mambahash/ops.hpp"

namespace mambahash::ssm {

namespace {

// phi(z) = (e^z - 1) / z and its derivative, stable near z = 0.
double phi(double z) { return z == 0.0 ? 1.0 : std::expm1(z) / z; }

double phi_prime(double z) {
  if (std::abs(z) < 1e-4) return 0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0;
  return (z * std::exp(z) - std::expm1(z)) / (z * z);
}

void require_shape(const char* what, const Tensor& t, const Shape& expected) {
  if (t.shape() != expected) {
    throw DimensionError(std::string("selective_scan: ") + what + " has shape " +
                         shape_str(t.shape()) + ", expected " + shape_str(expected));
  }
}

}  // namespace

Discretization parse_discretization(const std::string& name) {
  if (name == "zoh") return Discretization::kZoh;
  if (name == "euler") return Discretization::kEuler;
  throw ConfigError("unknown discretization '" + name + "' (expected zoh or euler)");
}

std::string to_string(Discretization d) { return d == Discretization::kZoh ? "zoh" : "euler"; }

StateMatrixA StateMatrixA::hippo(std::size_t channels, std::size_t n_state) {
  std::vector<double> v(channels * n_state);
  for (std::size_t d = 0; d < channels; ++d)
    for (std::size_t n = 0; n < n_state; ++n) v[d * n_state + n] = std::log(static_cast<double>(n + 1));
  return StateMatrixA(Tensor::from_data({channels, n_state}, std::move(v), true));
}

Tensor StateMatrixA::effective() const { return ops::scale(ops::exp(log_neg_), -1.0); }

DiscreteCoeffs discretize_zoh(double a, double b, double delta) {
  if (!(delta > 0.0)) throw ContractError("discretize_zoh: step size must be positive");
  const double z = delta * a;
  return {std::exp(z), delta * phi(z) * b};
}

DiscreteCoeffs discretize_euler(double a, double b, double delta) {
  if (!(delta > 0.0)) throw ContractError("discretize_euler: step size must be positive");
  return {std::exp(delta * a), delta * b};
}

DiscreteCoeffs discretize(Discretization rule, double a, double b, double delta) {
  return rule == Discretization::kZoh ? discretize_zoh(a, b, delta) : discretize_euler(a, b, delta);
}

DiscreteSystem discretize_system(std::span<const double> a, std::span<const double> b,
                                 std::span<const double> delta, std::size_t batch,
                                 std::size_t length, std::size_t channels, std::size_t n_state,
                                 Discretization rule) {
  if (a.size() != channels * n_state || b.size() != batch * length * n_state ||
      delta.size() != batch * length * channels) {
    throw DimensionError("discretize_system: operand sizes disagree with (B, L, D, N)");
  }
  for (double v : a) {
    if (!(v < 0.0) || !std::isfinite(v)) {
      throw ContractError("discretize_system: state matrix entries must be finite and negative");
    }
  }
  DiscreteSystem sys{batch, length, channels, n_state, {}, {}};
  sys.a_bar.resize(batch * length * channels * n_state);
  sys.b_bar.resize(sys.a_bar.size());
  for (std::size_t bt = 0; bt < batch * length; ++bt)
    for (std::size_t d = 0; d < channels; ++d) {
      const double dt = delta[bt * channels + d];
      for (std::size_t n = 0; n < n_state; ++n) {
        const auto c = discretize(rule, a[d * n_state + n], b[bt * n_state + n], dt);
        const std::size_t i = (bt * channels + d) * n_state + n;
        sys.a_bar[i] = c.a_bar;
        sys.b_bar[i] = c.b_bar;
      }
    }
  return sys;
}

std::vector<double> scan_discrete(const DiscreteSystem& sys, std::span<const double> x,
                                  std::span<const double> c, std::vector<double>* states) {
  const std::size_t B = sys.batch, L = sys.length, D = sys.channels, N = sys.n_state;
  if (x.size() != B * L * D || c.size() != B * L * N) {
    throw DimensionError("scan_discrete: x or c size disagrees with (B, L, D, N)");
  }
  std::vector<double> y(B * L * D, 0.0);
  std::vector<double> h(D * N);
  if (states) states->assign(B * L * D * N, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t t = 0; t < L; ++t) {
      const std::size_t bt = b * L + t;
      bool finite = true;
      for (std::size_t d = 0; d < D; ++d) {
        const double xt = x[bt * D + d];
        double acc = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t i = (bt * D + d) * N + n;
          double& hs = h[d * N + n];
          hs = sys.a_bar[i] * hs + sys.b_bar[i] * xt;
          finite = finite && std::isfinite(hs);
          acc += c[bt * N + n] * hs;
        }
        y[bt * D + d] = acc;
      }
      if (!finite) {
        throw NumericError("selective_scan: non-finite state at time step " + std::to_string(t) +
                           " (batch row " + std::to_string(b) + ")");
      }
      if (states) std::copy(h.begin(), h.end(), states->begin() + bt * D * N);
    }
  }
  return y;
}

Tensor selective_scan(const SelectiveScanInputs& in, const Tensor& a, Discretization rule) {
  if (in.x.rank() != 3) {
    throw DimensionError("selective_scan: x must be (B, L, D), got " + shape_str(in.x.shape()));
  }
  if (a.rank() != 2) {
    throw DimensionError("selective_scan: A must be (D, N), got " + shape_str(a.shape()));
  }
  const std::size_t B = in.x.dim(0), L = in.x.dim(1), D = in.x.dim(2), N = a.dim(1);
  require_shape("A", a, {D, N});
  require_shape("delta", in.delta, {B, L, D});
  require_shape("B", in.b, {B, L, N});
  require_shape("C", in.c, {B, L, N});
  for (double v : in.delta.data()) {
    if (!(v > 0.0)) throw ContractError("selective_scan: step sizes must be positive");
  }

  DiscreteSystem sys =
      discretize_system(a.data(), in.b.data(), in.delta.data(), B, L, D, N, rule);
  std::vector<double> states;
  std::vector<double> y = scan_discrete(sys, in.x.data(), in.c.data(), &states);

  const Tensor x = in.x, delta = in.delta, bm = in.b, cm = in.c;
  return Tensor::record(
      "selective_scan", {B, L, D}, std::move(y), {x, delta, bm, cm, a},
      [=, a_bar = std::move(sys.a_bar), states = std::move(states)](
          std::span<const double> gy, std::vector<std::span<double>>& gin) {
        auto xv = x.data(), dv = delta.data(), bv = bm.data(), cv = cm.data(), av = a.data();
        auto& gx = gin[0];
        auto& gdelta = gin[1];
        auto& gb = gin[2];
        auto& gc = gin[3];
        auto& ga = gin[4];
        std::vector<double> carry(D * N);
        for (std::size_t b = 0; b < B; ++b) {
          std::fill(carry.begin(), carry.end(), 0.0);
          for (std::size_t t = L; t-- > 0;) {
            const std::size_t bt = b * L + t;
            for (std::size_t d = 0; d < D; ++d) {
              const double gyt = gy[bt * D + d];
              const double xt = xv[bt * D + d];
              const double dt = dv[bt * D + d];
              double gx_acc = 0.0, gdelta_acc = 0.0;
              for (std::size_t n = 0; n < N; ++n) {
                const std::size_t i = (bt * D + d) * N + n;
                const double an = av[d * N + n];
                const double abar = a_bar[i];
                const double h_prev = t > 0 ? states[i - D * N] : 0.0;
                const double gh = carry[d * N + n] + cv[bt * N + n] * gyt;

                double q, dq_ddelta, dq_da;
                if (rule == Discretization::kZoh) {
                  const double z = dt * an;
                  q = dt * phi(z);
                  dq_ddelta = abar;
                  dq_da = dt * dt * phi_prime(z);
                } else {
                  q = dt;
                  dq_ddelta = 1.0;
                  dq_da = 0.0;
                }
                const double bn = bv[bt * N + n];
                const double g_abar = gh * h_prev;
                const double g_q = gh * xt * bn;

                gx_acc += gh * bn * q;
                gdelta_acc += g_abar * an * abar + g_q * dq_ddelta;
                if (!ga.empty()) ga[d * N + n] += g_abar * dt * abar + g_q * dq_da;
                if (!gb.empty()) gb[bt * N + n] += gh * xt * q;
                if (!gc.empty()) gc[bt * N + n] += gyt * states[i];
                carry[d * N + n] = gh * abar;
              }
              if (!gx.empty()) gx[bt * D + d] += gx_acc;
              if (!gdelta.empty()) gdelta[bt * D + d] += gdelta_acc;
            }
          }
        }
      });
}

std::size_t Ss1dParams::dt_rank(std::size_t channels) { return (channels + 15) / 16; }

Ss1dParams Ss1dParams::init(std::size_t channels, std::size_t n_state, Rng& rng) {
  const std::size_t R = dt_rank(channels);
  Ss1dParams p;
  p.dt_down = init::fan_in_uniform({channels, R}, channels, rng);
  p.dt_up = init::fan_in_uniform({R, channels}, R, rng);
  // softplus(dt_bias) log-uniform over [1e-3, 1e-1]
  std::uniform_real_distribution<double> u(std::log(1e-3), std::log(1e-1));
  std::vector<double> bias(channels);
  for (auto& v : bias) {
    const double dt = std::exp(u(rng));
    v = dt + std::log(-std::expm1(-dt));
  }
  p.dt_bias = Tensor::from_data({channels}, std::move(bias), true);
  p.w_b = init::fan_in_uniform({channels, n_state}, channels, rng);
  p.w_c = init::fan_in_uniform({channels, n_state}, channels, rng);
  p.a = StateMatrixA::hippo(channels, n_state);
  return p;
}

Ss1dParams Ss1dParams::zeros(std::size_t channels, std::size_t n_state) {
  const std::size_t R = dt_rank(channels);
  Ss1dParams p;
  p.dt_down = init::zeros({channels, R});
  p.dt_up = init::zeros({R, channels});
  p.dt_bias = init::zeros({channels});
  p.w_b = init::zeros({channels, n_state});
  p.w_c = init::zeros({channels, n_state});
  p.a = StateMatrixA::hippo(channels, n_state);
  return p;
}

void Ss1dParams::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + "dt_down", dt_down);
  out.emplace_back(prefix + "dt_up", dt_up);
  out.emplace_back(prefix + "dt_bias", dt_bias);
  out.emplace_back(prefix + "w_b", w_b);
  out.emplace_back(prefix + "w_c", w_c);
  out.emplace_back(prefix + "a_log", a.param());
}

Tensor ss1d(const Tensor& x, const Ss1dParams& p, Discretization rule) {
  Tensor delta = ops::softplus(ops::linear(ops::linear(x, p.dt_down, {}), p.dt_up, p.dt_bias));
  Tensor bm = ops::linear(x, p.w_b, {});
  Tensor cm = ops::linear(x, p.w_c, {});
  return selective_scan({x, delta, bm, cm}, p.a.effective(), rule);
}

}  // namespace mambahash::ssm
