#include "mambahash/mamba_blocks.hpp"

#include <algorithm>

#include "mambahash/errors.hpp"
#include "mambahash/ops.hpp"

namespace mambahash::blocks {

std::string to_string(ScanDirection dir) {
  switch (dir) {
    case ScanDirection::kLeftToRight: return "left-to-right";
    case ScanDirection::kRightToLeft: return "right-to-left";
    case ScanDirection::kTopToBottom: return "top-to-bottom";
    case ScanDirection::kBottomToTop: return "bottom-to-top";
  }
  return "?";
}

std::vector<std::size_t> direction_permutation(std::size_t height, std::size_t width,
                                               ScanDirection dir) {
  const std::size_t n = height * width;
  if (n == 0) throw DimensionError("direction_permutation: empty grid");
  std::vector<std::size_t> perm(n);
  switch (dir) {
    case ScanDirection::kLeftToRight:
    case ScanDirection::kRightToLeft:
      for (std::size_t p = 0; p < n; ++p) perm[p] = p;
      break;
    case ScanDirection::kTopToBottom:
    case ScanDirection::kBottomToTop:
      for (std::size_t col = 0; col < width; ++col)
        for (std::size_t row = 0; row < height; ++row) perm[col * height + row] = row * width + col;
      break;
  }
  if (dir == ScanDirection::kRightToLeft || dir == ScanDirection::kBottomToTop) {
    std::reverse(perm.begin(), perm.end());
  }
  return perm;
}

std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t p = 0; p < perm.size(); ++p) inv[perm[p]] = p;
  return inv;
}

namespace {

Tensor as_sequence(const Tensor& x, std::size_t height, std::size_t width, const char* op) {
  if (x.rank() == 4) {
    if (x.dim(1) != height || x.dim(2) != width) {
      throw DimensionError(std::string(op) + ": grid " + shape_str(x.shape()) +
                           " does not match H=" + std::to_string(height) +
                           ", W=" + std::to_string(width));
    }
    return ops::reshape(x, {x.dim(0), height * width, x.dim(3)});
  }
  if (x.rank() != 3) {
    throw DimensionError(std::string(op) + ": expected (B, N, D) or (B, H, W, D), got " +
                         shape_str(x.shape()));
  }
  if (x.dim(1) != height * width) {
    throw ContractError(std::string(op) + ": sequence length " + std::to_string(x.dim(1)) +
                        " is not H*W = " + std::to_string(height) + "*" + std::to_string(width));
  }
  return x;
}

}  // namespace

Tensor reorder_for_direction(const Tensor& x, std::size_t height, std::size_t width,
                             ScanDirection dir) {
  Tensor seq = as_sequence(x, height, width, "reorder_for_direction");
  return ops::gather_rows(seq, direction_permutation(height, width, dir));
}

Tensor restore_grid_order(const Tensor& seq, std::size_t height, std::size_t width,
                          ScanDirection dir) {
  Tensor s = as_sequence(seq, height, width, "restore_grid_order");
  return ops::gather_rows(s, invert_permutation(direction_permutation(height, width, dir)));
}

GateActivation parse_gate_activation(const std::string& name) {
  if (name == "silu") return GateActivation::kSilu;
  if (name == "identity") return GateActivation::kIdentity;
  throw ConfigError("unknown gate activation '" + name + "' (expected silu or identity)");
}

std::string to_string(GateActivation g) { return g == GateActivation::kSilu ? "silu" : "identity"; }

VsssParams VsssParams::init(std::size_t channels, const BlockOptions& opt, Rng& rng) {
  VsssParams p;
  p.w_in = init::fan_in_uniform({channels, channels}, channels, rng);
  p.b_in = init::zeros({channels});
  p.dw_w = init::fan_in_uniform({3, 3, channels}, 9, rng);
  p.dw_b = init::zeros({channels});
  p.ss1d = ssm::Ss1dParams::init(channels, opt.n_state, rng);
  p.ln_g = init::ones({channels});
  p.ln_b = init::zeros({channels});
  p.w_out = init::fan_in_uniform({channels, channels}, channels, rng);
  p.b_out = init::zeros({channels});
  return p;
}

void VsssParams::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + "w_in", w_in);
  out.emplace_back(prefix + "b_in", b_in);
  out.emplace_back(prefix + "dw_w", dw_w);
  out.emplace_back(prefix + "dw_b", dw_b);
  ss1d.collect(prefix + "ss1d.", out);
  out.emplace_back(prefix + "ln_g", ln_g);
  out.emplace_back(prefix + "ln_b", ln_b);
  out.emplace_back(prefix + "w_out", w_out);
  out.emplace_back(prefix + "b_out", b_out);
}

Tensor vsss_block(const Tensor& x_seq, const ScanGeometry& geom, const VsssParams& p,
                  const BlockOptions& opt) {
  if (x_seq.rank() != 3) {
    throw DimensionError("vsss_block: expected (B, N, Dg), got " + shape_str(x_seq.shape()));
  }
  const std::size_t B = x_seq.dim(0), N = x_seq.dim(1), Dg = x_seq.dim(2);
  if (N != geom.height * geom.width) {
    throw ContractError("vsss_block: sequence length " + std::to_string(N) +
                        " does not factor into the recorded grid " +
                        std::to_string(geom.height) + "x" + std::to_string(geom.width));
  }
  Tensor y = ops::linear(x_seq, p.w_in, p.b_in);
  Tensor grid = ops::reshape(restore_grid_order(y, geom.height, geom.width, geom.direction),
                             {B, geom.height, geom.width, Dg});
  grid = ops::depthwise_conv2d(grid, p.dw_w, p.dw_b, 1, 1);
  Tensor seq = reorder_for_direction(grid, geom.height, geom.width, geom.direction);
  if (opt.gate == GateActivation::kSilu) seq = ops::silu(seq);
  seq = ssm::ss1d(seq, p.ss1d, opt.discretization);
  seq = ops::layer_norm(seq, p.ln_g, p.ln_b);
  return ops::linear(seq, p.w_out, p.b_out);
}

CiamParams CiamParams::init(std::size_t channels, std::size_t kernel, Rng& rng) {
  if (kernel == 0 || kernel % 2 == 0) {
    throw ConfigError("ciam: kernel size " + std::to_string(kernel) + " must be odd");
  }
  CiamParams p;
  p.conv_w = init::fan_in_uniform({kernel}, kernel, rng);
  p.w_global = init::fan_in_uniform({channels, channels}, channels, rng);
  p.b_global = init::zeros({channels});
  return p;
}

void CiamParams::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + "conv_w", conv_w);
  out.emplace_back(prefix + "w_global", w_global);
  out.emplace_back(prefix + "b_global", b_global);
}

Tensor ciam(const Tensor& x, const CiamParams& p) {
  const std::size_t k = p.conv_w.numel();
  if (k % 2 == 0) throw ConfigError("ciam: kernel size " + std::to_string(k) + " must be odd");
  if (x.rank() != 3) throw DimensionError("ciam: expected (B, N, D), got " + shape_str(x.shape()));
  Tensor avg = ops::mean_rows(x);
  Tensor local = ops::conv1d_last(avg, p.conv_w);
  Tensor global = ops::linear(avg, p.w_global, p.b_global);
  return ops::sigmoid(ops::add(global, local));
}

GroupLayerParams GroupLayerParams::init(std::size_t channels, const BlockOptions& opt, Rng& rng) {
  if (channels % kGroups != 0) {
    throw ConfigError("mamba_group_layer: channel count " + std::to_string(channels) +
                      " is not divisible by 4");
  }
  GroupLayerParams p;
  for (auto& v : p.vsss) v = VsssParams::init(channels / kGroups, opt, rng);
  p.ciam = CiamParams::init(channels, opt.ciam_kernel, rng);
  p.ln_g = init::ones({channels});
  p.ln_b = init::zeros({channels});
  p.w_out = init::fan_in_uniform({channels, channels}, channels, rng);
  p.b_out = init::zeros({channels});
  return p;
}

void GroupLayerParams::collect(const std::string& prefix, NamedParams& out) const {
  for (std::size_t g = 0; g < kGroups; ++g) vsss[g].collect(prefix + "vsss" + std::to_string(g) + ".", out);
  ciam.collect(prefix + "ciam.", out);
  out.emplace_back(prefix + "ln_g", ln_g);
  out.emplace_back(prefix + "ln_b", ln_b);
  out.emplace_back(prefix + "w_out", w_out);
  out.emplace_back(prefix + "b_out", b_out);
}

Tensor mamba_group_layer(const Tensor& x_o, std::size_t height, std::size_t width,
                         const GroupLayerParams& p, const BlockOptions& opt,
                         GroupLayerTrace* trace, const std::optional<Tensor>& score_override) {
  if (x_o.rank() != 3) {
    throw DimensionError("mamba_group_layer: expected (B, N, D), got " + shape_str(x_o.shape()));
  }
  const std::size_t D = x_o.dim(2);
  if (D % kGroups != 0) {
    throw ConfigError("mamba_group_layer: channel count " + std::to_string(D) +
                      " is not divisible by 4");
  }
  const std::size_t Dg = D / kGroups;
  std::vector<Tensor> parts;
  parts.reserve(kGroups);
  for (std::size_t g = 0; g < kGroups; ++g) {
    const ScanGeometry geom{height, width, kAllDirections[g]};
    Tensor scanned =
        reorder_for_direction(ops::slice_last(x_o, g * Dg, (g + 1) * Dg), height, width, geom.direction);
    if (trace) trace->scanned[g] = scanned;
    Tensor out = vsss_block(scanned, geom, p.vsss[g], opt);
    parts.push_back(restore_grid_order(out, height, width, geom.direction));
  }
  Tensor x_vs = ops::concat_last(parts);
  Tensor scores = score_override ? *score_override : ciam(x_o, p.ciam);
  if (trace) {
    trace->x_vs = x_vs;
    trace->scores = scores;
  }
  Tensor mixed = ops::layer_norm(ops::mul_channels(x_vs, scores), p.ln_g, p.ln_b);
  return ops::linear(mixed, p.w_out, p.b_out);
}

FfnParams FfnParams::init(std::size_t channels, std::size_t ratio, Rng& rng) {
  const std::size_t hidden = channels * ratio;
  FfnParams p;
  p.w1 = init::fan_in_uniform({channels, hidden}, channels, rng);
  p.b1 = init::zeros({hidden});
  p.w2 = init::fan_in_uniform({hidden, channels}, hidden, rng);
  p.b2 = init::zeros({channels});
  return p;
}

void FfnParams::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + "w1", w1);
  out.emplace_back(prefix + "b1", b1);
  out.emplace_back(prefix + "w2", w2);
  out.emplace_back(prefix + "b2", b2);
}

Tensor ffn(const Tensor& x, const FfnParams& p) {
  return ops::linear(ops::silu(ops::linear(x, p.w1, p.b1)), p.w2, p.b2);
}

MambaBlockParams MambaBlockParams::init(std::size_t channels, const BlockOptions& opt, Rng& rng) {
  MambaBlockParams p;
  p.group = GroupLayerParams::init(channels, opt, rng);
  p.ln_g = init::ones({channels});
  p.ln_b = init::zeros({channels});
  p.ffn = FfnParams::init(channels, opt.ffn_ratio, rng);
  return p;
}

void MambaBlockParams::collect(const std::string& prefix, NamedParams& out) const {
  group.collect(prefix + "group.", out);
  out.emplace_back(prefix + "ln_g", ln_g);
  out.emplace_back(prefix + "ln_b", ln_b);
  ffn.collect(prefix + "ffn.", out);
}

Tensor mamba_block(const Tensor& x_o, std::size_t height, std::size_t width,
                   const MambaBlockParams& p, const BlockOptions& opt) {
  Tensor x_t = ops::add(x_o, mamba_group_layer(x_o, height, width, p.group, opt));
  return ops::add(x_t, ffn(ops::layer_norm(x_t, p.ln_g, p.ln_b), p.ffn));
}

}  // namespace mambahash::blocks
