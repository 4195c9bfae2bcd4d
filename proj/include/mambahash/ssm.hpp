#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mambahash/params.hpp"
#include "mambahash/tensor.hpp"

namespace mambahash::ssm {

enum class Discretization { kZoh, kEuler };

Discretization parse_discretization(const std::string& name);
std::string to_string(Discretization d);

// Diagonal state matrix stored as log(-A), so the effective A = -exp(log_neg)
// is strictly negative for any finite parameter value.
class StateMatrixA {
 public:
  StateMatrixA() = default;
  explicit StateMatrixA(Tensor log_neg) : log_neg_(std::move(log_neg)) {}

  // A[d, n] = -(n + 1) for every channel d.
  static StateMatrixA hippo(std::size_t channels, std::size_t n_state);

  // Effective A (D, N) as a taped expression of the parameter.
  Tensor effective() const;
  Tensor& param() { return log_neg_; }
  const Tensor& param() const { return log_neg_; }
  std::size_t channels() const { return log_neg_.dim(0); }
  std::size_t n_state() const { return log_neg_.dim(1); }

 private:
  Tensor log_neg_;
};

// Input-dependent scan operands. x and delta are (B, L, D); b and c are
// (B, L, N).
struct SelectiveScanInputs {
  Tensor x;
  Tensor delta;
  Tensor b;
  Tensor c;
};

// One discretized coefficient pair for a scalar diagonal entry.
struct DiscreteCoeffs {
  double a_bar;
  double b_bar;
};

// Zero-order hold: a_bar = exp(delta*a),
// b_bar = (delta*a)^-1 (exp(delta*a) - 1) * delta*b, with the delta*a -> 0
// limit b_bar -> delta*b.
DiscreteCoeffs discretize_zoh(double a, double b, double delta);
// Simplified rule: a_bar = exp(delta*a), b_bar = delta*b.
DiscreteCoeffs discretize_euler(double a, double b, double delta);
DiscreteCoeffs discretize(Discretization rule, double a, double b, double delta);

// Discretized system laid out as (B, L, D, N), row-major.
struct DiscreteSystem {
  std::size_t batch = 0, length = 0, channels = 0, n_state = 0;
  std::vector<double> a_bar;
  std::vector<double> b_bar;
};

// Tensor-level discretization. a is (D, N), b is (B, L, N), delta is
// (B, L, D). Throws ContractError if any delta <= 0 or a >= 0.
DiscreteSystem discretize_system(std::span<const double> a, std::span<const double> b,
                                 std::span<const double> delta, std::size_t batch,
                                 std::size_t length, std::size_t channels, std::size_t n_state,
                                 Discretization rule = Discretization::kZoh);

// Recurrence core on an already discretized system, h_0 = 0:
//   h_t = a_bar_t * h_{t-1} + b_bar_t * x_t,  y_t[d] = sum_n c_t[n] h_t[d, n].
// x is (B, L, D), c is (B, L, N); returns y (B, L, D). If `states` is
// non-null it receives every h_t as (B, L, D, N).
std::vector<double> scan_discrete(const DiscreteSystem& sys, std::span<const double> x,
                                  std::span<const double> c,
                                  std::vector<double>* states = nullptr);

// Differentiable selective scan with respect to x, delta, b, c and a
// (the effective (D, N) state matrix).
Tensor selective_scan(const SelectiveScanInputs& in, const Tensor& a,
                      Discretization rule = Discretization::kZoh);

// Parameters of the SS1D layer over D channels with an N-dimensional state.
struct Ss1dParams {
  Tensor dt_down;  // (D, R) low-rank step projection
  Tensor dt_up;    // (R, D)
  Tensor dt_bias;  // (D)
  Tensor w_b;      // (D, N)
  Tensor w_c;      // (D, N)
  StateMatrixA a;  // (D, N)

  static Ss1dParams init(std::size_t channels, std::size_t n_state, Rng& rng);
  static Ss1dParams zeros(std::size_t channels, std::size_t n_state);
  static std::size_t dt_rank(std::size_t channels);

  void collect(const std::string& prefix, NamedParams& out) const;
};

// delta = softplus(x W_down W_up + dt_bias), b = x W_b, c = x W_c, then
// the selective scan. x is (B, L, D); output has the same shape.
Tensor ss1d(const Tensor& x, const Ss1dParams& p, Discretization rule = Discretization::kZoh);

}  // namespace mambahash::ssm
