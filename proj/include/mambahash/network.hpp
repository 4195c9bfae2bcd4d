#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mambahash/mamba_blocks.hpp"
#include "mambahash/params.hpp"
#include "mambahash/ssm.hpp"
#include "mambahash/tensor.hpp"

namespace mambahash {

inline constexpr std::size_t kStages = 4;

struct ModelConfig {
  std::array<std::size_t, kStages> depths{3, 4, 16, 3};
  std::array<std::size_t, kStages> dims{64, 128, 348, 512};
  std::size_t hash_bits = 64;
  // 0 selects the per-length default (3 up to 32 bits, 5 above).
  std::size_t ciam_kernel = 0;
  double ratio_mu = 1.0 / 16.0;
  double ratio_b = 0.0;
  double eta = 0.05;
  std::size_t n_state = 16;
  std::size_t ffn_ratio = 4;
  std::size_t stem_width = 64;
  ssm::Discretization discretization = ssm::Discretization::kZoh;
  blocks::GateActivation gate = blocks::GateActivation::kSilu;

  // dims [8, 16, 24, 32], depths [1, 1, 2, 1], 16-channel stem.
  static ModelConfig tiny(std::size_t bits = 16);

  std::size_t resolved_ciam_kernel() const;
  blocks::BlockOptions block_options() const;

  // Throws ConfigError on the first violated invariant.
  void validate() const;

  // Line-oriented "key = value" form; round-trips through parse/set.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  // Applies one key; returns false if the key is not a model key.
  bool set(const std::string& key, const std::string& value);

  bool operator==(const ModelConfig&) const = default;
};

// CIAM kernel for a given code length: 3 for 16/32 bits, 5 for 48/64.
std::size_t default_ciam_kernel(std::size_t bits);

// lambda = 2^(mu * K + b)
double enhancement_ratio(std::size_t bits, double mu = 1.0 / 16.0, double b = 0.0);
// round(lambda * D), at least 1.
std::size_t afem_inner_width(std::size_t channels, double lambda);

struct StemParams {
  Tensor w1, b1;  // 7x7 stride 2, 3 -> stem_width
  Tensor w2, b2;  // 3x3 stride 1
  Tensor w3, b3;  // 3x3 stride 1
  Tensor w4, b4;  // 3x3 stride 2, stem_width -> dims[0]

  static StemParams init(std::size_t width, std::size_t out_channels, Rng& rng);
  void collect(const std::string& prefix, NamedParams& out) const;
};

// (B, S, S, 3) -> (B, S/4, S/4, C). S must be divisible by 4.
Tensor stem(const Tensor& image, const StemParams& p);

struct DownsampleParams {
  Tensor w, b;        // (3, 3, Cin, Cout), (Cout)
  Tensor ln_g, ln_b;  // (Cout)

  static DownsampleParams init(std::size_t in_channels, std::size_t out_channels, Rng& rng);
  void collect(const std::string& prefix, NamedParams& out) const;
};

// 3x3 stride-2 conv then LayerNorm: (B, H, W, Cin) -> (B, H/2, W/2, Cout).
Tensor downsample(const Tensor& x, const DownsampleParams& p);

struct AfemParams {
  Tensor w_expand, b_expand;    // 1x1 conv (D, E)
  Tensor dw1_w, dw1_b;          // (1, 1, E)
  Tensor dw3_w, dw3_b;          // (3, 3, E)
  Tensor dw5_w, dw5_b;          // (5, 5, E)
  Tensor w_restore, b_restore;  // 1x1 conv (E, D)

  static AfemParams init(std::size_t channels, double lambda, Rng& rng);
  std::size_t inner_width() const { return w_expand.dim(1); }
  void collect(const std::string& prefix, NamedParams& out) const;
};

// Expand D -> E, sum of 1x1 / 3x3 / 5x5 depth-wise convs, ReLU, restore E -> D.
Tensor afem(const Tensor& x, const AfemParams& p);

struct NetworkTrace {
  std::vector<Shape> stage_shapes;  // (B, H, W, D) entering each stage
  Shape afem_shape;
  Tensor pooled;
};

// The full hashing network: stem, four stages of Mamba blocks with
// downsampling between them, AFEM, global average pooling and a tanh hash
// layer producing codes in (-1, 1)^K.
class MambaHashNet {
 public:
  MambaHashNet(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  // Parameters in a fixed registration order.
  NamedParams parameters() const;
  std::size_t parameter_count() const;

  // images (B, S, S, 3) -> codes (B, K).
  Tensor forward(const Tensor& images, NetworkTrace* trace = nullptr) const;

  StemParams& stem_params() { return stem_; }
  AfemParams& afem_params() { return afem_; }
  Tensor& hash_weight() { return hash_w_; }

 private:
  ModelConfig config_;
  StemParams stem_;
  std::array<std::vector<blocks::MambaBlockParams>, kStages> stages_;
  std::array<DownsampleParams, kStages - 1> downsample_;
  AfemParams afem_;
  Tensor hash_w_, hash_b_;
};

// Convenience wrapper: forward pass of `net`.
Tensor forward_hash(const Tensor& images, const MambaHashNet& net);

}  // namespace mambahash
