#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mambahash/params.hpp"
#include "mambahash/ssm.hpp"
#include "mambahash/tensor.hpp"

namespace mambahash::blocks {

enum class ScanDirection { kLeftToRight, kRightToLeft, kTopToBottom, kBottomToTop };

inline constexpr std::array<ScanDirection, 4> kAllDirections = {
    ScanDirection::kLeftToRight, ScanDirection::kRightToLeft, ScanDirection::kTopToBottom,
    ScanDirection::kBottomToTop};

// Channel group g is always scanned along kAllDirections[g].
inline constexpr std::size_t kGroups = 4;

std::string to_string(ScanDirection dir);

// Sequence position p reads grid cell perm[p] (cell index = row * W + col).
std::vector<std::size_t> direction_permutation(std::size_t height, std::size_t width,
                                               ScanDirection dir);
std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& perm);

// (B, H, W, D) grid or (B, H*W, D) grid-ordered sequence -> (B, N, D) in
// scan order.
Tensor reorder_for_direction(const Tensor& x, std::size_t height, std::size_t width,
                             ScanDirection dir);
// Inverse of reorder_for_direction; returns a grid-ordered (B, N, D).
Tensor restore_grid_order(const Tensor& seq, std::size_t height, std::size_t width,
                          ScanDirection dir);

enum class GateActivation { kSilu, kIdentity };
GateActivation parse_gate_activation(const std::string& name);
std::string to_string(GateActivation g);

struct BlockOptions {
  std::size_t n_state = 16;
  std::size_t ffn_ratio = 4;
  std::size_t ciam_kernel = 3;
  ssm::Discretization discretization = ssm::Discretization::kZoh;
  GateActivation gate = GateActivation::kSilu;
};

// Spatial bookkeeping carried alongside a flattened sequence.
struct ScanGeometry {
  std::size_t height;
  std::size_t width;
  ScanDirection direction;
};

struct VsssParams {
  Tensor w_in, b_in;      // (Dg, Dg), (Dg)
  Tensor dw_w, dw_b;      // (3, 3, Dg), (Dg)
  ssm::Ss1dParams ss1d;
  Tensor ln_g, ln_b;      // (Dg)
  Tensor w_out, b_out;    // (Dg, Dg), (Dg)

  static VsssParams init(std::size_t channels, const BlockOptions& opt, Rng& rng);
  void collect(const std::string& prefix, NamedParams& out) const;
};

// in-projection -> 3x3 depth-wise conv in grid space -> gate -> SS1D ->
// LayerNorm -> out-projection. x_seq is (B, N, Dg) in the scan order of
// `geom`; output keeps that order and shape.
Tensor vsss_block(const Tensor& x_seq, const ScanGeometry& geom, const VsssParams& p,
                  const BlockOptions& opt);

struct CiamParams {
  Tensor conv_w;          // (k) local branch across channels
  Tensor w_global, b_global;  // (D, D), (D)

  static CiamParams init(std::size_t channels, std::size_t kernel, Rng& rng);
  void collect(const std::string& prefix, NamedParams& out) const;
};

// Channel scores sigmoid(conv1d(avg) + avg W + b) in (0, 1), shape (B, 1, D).
Tensor ciam(const Tensor& x, const CiamParams& p);

struct GroupLayerParams {
  std::array<VsssParams, kGroups> vsss;
  CiamParams ciam;
  Tensor ln_g, ln_b;  // (D)
  Tensor w_out, b_out;  // (D, D), (D)

  static GroupLayerParams init(std::size_t channels, const BlockOptions& opt, Rng& rng);
  void collect(const std::string& prefix, NamedParams& out) const;
};

// Intermediate values of one grouped layer pass, exposed for inspection.
struct GroupLayerTrace {
  std::array<Tensor, kGroups> scanned;  // per-group input in scan order
  Tensor x_vs;                          // concatenated, grid order
  Tensor scores;                        // CIAM output (B, 1, D)
};

// x_o is a grid-ordered (B, H*W, D) sequence. `score_override`, when set,
// replaces the CIAM scores (used to ablate the attention).
Tensor mamba_group_layer(const Tensor& x_o, std::size_t height, std::size_t width,
                         const GroupLayerParams& p, const BlockOptions& opt,
                         GroupLayerTrace* trace = nullptr,
                         const std::optional<Tensor>& score_override = std::nullopt);

struct FfnParams {
  Tensor w1, b1;  // (D, rD), (rD)
  Tensor w2, b2;  // (rD, D), (D)

  static FfnParams init(std::size_t channels, std::size_t ratio, Rng& rng);
  void collect(const std::string& prefix, NamedParams& out) const;
};

// Two linear layers with SiLU between.
Tensor ffn(const Tensor& x, const FfnParams& p);

struct MambaBlockParams {
  GroupLayerParams group;
  Tensor ln_g, ln_b;  // (D), pre-FFN norm
  FfnParams ffn;

  static MambaBlockParams init(std::size_t channels, const BlockOptions& opt, Rng& rng);
  void collect(const std::string& prefix, NamedParams& out) const;
};

// x_t = x_o + group_layer(x_o); x_mg = x_t + ffn(LN(x_t)).
Tensor mamba_block(const Tensor& x_o, std::size_t height, std::size_t width,
                   const MambaBlockParams& p, const BlockOptions& opt);

}  // namespace mambahash::blocks
