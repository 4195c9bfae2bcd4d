#pragma once

#include <cstddef>
#include <vector>

#include "mambahash/tensor.hpp"

// Differentiable layer primitives. Image tensors are channels-last
// (B, H, W, C); sequence tensors are (B, N, D).
namespace mambahash::ops {

inline constexpr double kLayerNormEps = 1e-5;

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// (B, N, D) * (B, 1, D): per-channel multipliers broadcast over N.
Tensor mul_channels(const Tensor& x, const Tensor& scores);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);

Tensor sum(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);

// Channel slice [begin, end) and concatenation along the last axis.
Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_last(const std::vector<Tensor>& parts);

// out[b, p, :] = x[b, index[p], :] for x of shape (B, N, ...).
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& index);
// Reverses axis 1 of a (B, N, ...) tensor.
Tensor reverse_sequence(const Tensor& x);

// Mean over axis 1: (B, N, D) -> (B, 1, D).
Tensor mean_rows(const Tensor& x);
// (B, H, W, C) -> (B, C).
Tensor global_avg_pool(const Tensor& x);

// x (..., in) @ weight (in, out) + bias (out). `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Dense 2-D convolution. x (B, H, W, Cin), weight (kh, kw, Cin, Cout),
// bias (Cout) or undefined. Output side = (in + 2*pad - k) / stride + 1.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t pad);

// Per-channel 2-D convolution. weight (kh, kw, C), bias (C) or undefined.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        std::size_t stride, std::size_t pad);

// Single-filter 1-D convolution along the last axis with zero "same"
// padding. x (..., D), weight (k) with k odd.
Tensor conv1d_last(const Tensor& x, const Tensor& weight);

// Normalizes over the last axis, then applies gain and bias (both (D)).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = kLayerNormEps);

}  // namespace mambahash::ops
