#include "mambahash/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mambahash/errors.hpp"

namespace mambahash::ops {

namespace {

using Grads = std::vector<std::span<double>>;

[[noreturn]] void dim_error(const char* op, const std::string& detail) {
  throw DimensionError(std::string(op) + ": " + detail);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    dim_error(op, "operand shapes differ: " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& x, std::size_t rank, const char* layout) {
  if (x.rank() != rank) {
    dim_error(op, std::string("expected rank ") + std::to_string(rank) + " " + layout +
                      ", got " + shape_str(x.shape()));
  }
}

std::size_t conv_out(const char* op, std::size_t in, std::size_t k, std::size_t stride,
                     std::size_t pad, const char* axis) {
  if (stride == 0) dim_error(op, "stride must be positive");
  if (in + 2 * pad < k) {
    dim_error(op, std::string("kernel ") + std::to_string(k) + " larger than padded " + axis +
                      " extent " + std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - k) / stride + 1;
}

template <typename F, typename DF>
Tensor unary(const char* op, const Tensor& x, F f, DF df) {
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return Tensor::record(op, x.shape(), std::move(out), {x},
                        [x, df](std::span<const double> g, Grads& gin) {
                          auto xv = x.data();
                          for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * df(xv[i]);
                        });
}

double sigmoid_scalar(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  double e = std::exp(v);
  return e / (1.0 + e);
}

double softplus_scalar(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor::record("add", a.shape(), std::move(out), {a, b},
                        [](std::span<const double> g, Grads& gin) {
                          for (auto& gi : gin) {
                            if (gi.empty()) continue;
                            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
                          }
                        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor::record("mul", a.shape(), std::move(out), {a, b},
                        [a, b](std::span<const double> g, Grads& gin) {
                          auto av = a.data(), bv = b.data();
                          if (!gin[0].empty())
                            for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * bv[i];
                          if (!gin[1].empty())
                            for (std::size_t i = 0; i < g.size(); ++i) gin[1][i] += g[i] * av[i];
                        });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  auto av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return Tensor::record("scale", a.shape(), std::move(out), {a},
                        [factor](std::span<const double> g, Grads& gin) {
                          for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * factor;
                        });
}

Tensor mul_channels(const Tensor& x, const Tensor& scores) {
  require_rank("mul_channels", x, 3, "(B, N, D)");
  require_rank("mul_channels", scores, 3, "(B, 1, D)");
  const std::size_t B = x.dim(0), N = x.dim(1), D = x.dim(2);
  if (scores.dim(0) != B || scores.dim(1) != 1 || scores.dim(2) != D) {
    dim_error("mul_channels", "scores " + shape_str(scores.shape()) + " do not broadcast over " +
                                  shape_str(x.shape()) + " on axes 0 and 2");
  }
  std::vector<double> out(x.numel());
  auto xv = x.data(), sv = scores.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t d = 0; d < D; ++d)
        out[(b * N + n) * D + d] = xv[(b * N + n) * D + d] * sv[b * D + d];
  return Tensor::record(
      "mul_channels", x.shape(), std::move(out), {x, scores},
      [x, scores, B, N, D](std::span<const double> g, Grads& gin) {
        auto xv = x.data(), sv = scores.data();
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t d = 0; d < D; ++d) {
              const std::size_t i = (b * N + n) * D + d;
              if (!gin[0].empty()) gin[0][i] += g[i] * sv[b * D + d];
              if (!gin[1].empty()) gin[1][b * D + d] += g[i] * xv[i];
            }
      });
}

Tensor relu(const Tensor& x) {
  return unary("relu", x, [](double v) { return v > 0 ? v : 0.0; },
               [](double v) { return v > 0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); },
               [](double v) {
                 double t = std::tanh(v);
                 return 1.0 - t * t;
               });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, sigmoid_scalar, [](double v) {
    double s = sigmoid_scalar(v);
    return s * (1.0 - s);
  });
}

Tensor silu(const Tensor& x) {
  return unary("silu", x, [](double v) { return v * sigmoid_scalar(v); },
               [](double v) {
                 double s = sigmoid_scalar(v);
                 return s * (1.0 + v * (1.0 - s));
               });
}

Tensor softplus(const Tensor& x) {
  return unary("softplus", x, softplus_scalar, sigmoid_scalar);
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); },
               [](double v) { return std::exp(v); });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return Tensor::record("sum", {1}, {total}, {x},
                        [](std::span<const double> g, Grads& gin) {
                          for (auto& v : gin[0]) v += g[0];
                        });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    dim_error("reshape", "cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::record("reshape", std::move(shape), std::move(out), {x},
                        [](std::span<const double> g, Grads& gin) {
                          for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
                        });
}

Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0) dim_error("slice_last", "scalar input");
  const std::size_t D = x.shape().back();
  if (begin >= end || end > D) {
    dim_error("slice_last", "range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                ") invalid for last axis of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / D, W = end - begin;
  std::vector<double> out(rows * W);
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xv.begin() + r * D + begin, W, out.begin() + r * W);
  Shape shape = x.shape();
  shape.back() = W;
  return Tensor::record("slice_last", std::move(shape), std::move(out), {x},
                        [rows, D, W, begin](std::span<const double> g, Grads& gin) {
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t c = 0; c < W; ++c) gin[0][r * D + begin + c] += g[r * W + c];
                        });
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) dim_error("concat_last", "no inputs");
  Shape lead = parts[0].shape();
  lead.pop_back();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    Shape pl = p.shape();
    widths.push_back(pl.back());
    pl.pop_back();
    if (pl != lead) {
      dim_error("concat_last", "leading axes " + shape_str(p.shape()) + " disagree with " +
                                   shape_str(parts[0].shape()));
    }
    total += widths.back();
  }
  const std::size_t rows = shape_numel(lead);
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pv = parts[k].data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(pv.begin() + r * widths[k], widths[k], out.begin() + r * total + offset);
    offset += widths[k];
  }
  Shape shape = lead;
  shape.push_back(total);
  return Tensor::record("concat_last", std::move(shape), std::move(out), parts,
                        [rows, total, widths](std::span<const double> g, Grads& gin) {
                          std::size_t offset = 0;
                          for (std::size_t k = 0; k < gin.size(); ++k) {
                            if (!gin[k].empty()) {
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t c = 0; c < widths[k]; ++c)
                                  gin[k][r * widths[k] + c] += g[r * total + offset + c];
                            }
                            offset += widths[k];
                          }
                        });
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& index) {
  if (x.rank() < 2) dim_error("gather_rows", "expected rank >= 2, got " + shape_str(x.shape()));
  const std::size_t B = x.dim(0), N = x.dim(1), inner = x.numel() / (B * N);
  const std::size_t M = index.size();
  if (M == 0) dim_error("gather_rows", "empty index");
  for (auto i : index) {
    if (i >= N) dim_error("gather_rows", "index " + std::to_string(i) + " out of range on axis 1 of " + shape_str(x.shape()));
  }
  std::vector<double> out(B * M * inner);
  auto xv = x.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t p = 0; p < M; ++p)
      std::copy_n(xv.begin() + (b * N + index[p]) * inner, inner, out.begin() + (b * M + p) * inner);
  Shape shape = x.shape();
  shape[1] = M;
  return Tensor::record("gather_rows", std::move(shape), std::move(out), {x},
                        [index, B, N, M, inner](std::span<const double> g, Grads& gin) {
                          for (std::size_t b = 0; b < B; ++b)
                            for (std::size_t p = 0; p < M; ++p)
                              for (std::size_t c = 0; c < inner; ++c)
                                gin[0][(b * N + index[p]) * inner + c] += g[(b * M + p) * inner + c];
                        });
}

Tensor reverse_sequence(const Tensor& x) {
  if (x.rank() < 2) dim_error("reverse_sequence", "expected rank >= 2, got " + shape_str(x.shape()));
  const std::size_t N = x.dim(1);
  std::vector<std::size_t> index(N);
  for (std::size_t p = 0; p < N; ++p) index[p] = N - 1 - p;
  return gather_rows(x, index);
}

Tensor mean_rows(const Tensor& x) {
  require_rank("mean_rows", x, 3, "(B, N, D)");
  const std::size_t B = x.dim(0), N = x.dim(1), D = x.dim(2);
  std::vector<double> out(B * D, 0.0);
  auto xv = x.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t d = 0; d < D; ++d) out[b * D + d] += xv[(b * N + n) * D + d];
    for (std::size_t d = 0; d < D; ++d) out[b * D + d] /= static_cast<double>(N);
  }
  return Tensor::record("mean_rows", {B, 1, D}, std::move(out), {x},
                        [B, N, D](std::span<const double> g, Grads& gin) {
                          const double inv = 1.0 / static_cast<double>(N);
                          for (std::size_t b = 0; b < B; ++b)
                            for (std::size_t n = 0; n < N; ++n)
                              for (std::size_t d = 0; d < D; ++d)
                                gin[0][(b * N + n) * D + d] += g[b * D + d] * inv;
                        });
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank("global_avg_pool", x, 4, "(B, H, W, C)");
  const std::size_t B = x.dim(0), C = x.dim(3);
  return reshape(mean_rows(reshape(x, {B, x.dim(1) * x.dim(2), C})), {B, C});
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() == 0) dim_error("linear", "scalar input");
  require_rank("linear", weight, 2, "(in, out)");
  const std::size_t in = weight.dim(0), outw = weight.dim(1);
  if (x.shape().back() != in) {
    dim_error("linear", "input last axis " + std::to_string(x.shape().back()) +
                            " does not match weight axis 0 of " + shape_str(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != outw)) {
    dim_error("linear", "bias " + shape_str(bias.shape()) + " does not match weight axis 1 (" +
                            std::to_string(outw) + ")");
  }
  const std::size_t rows = x.numel() / in;
  std::vector<double> out(rows * outw, 0.0);
  auto xv = x.data(), wv = weight.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* o = out.data() + r * outw;
    if (bias.defined()) std::copy(bias.data().begin(), bias.data().end(), o);
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = xv[r * in + i];
      const double* w = wv.data() + i * outw;
      for (std::size_t j = 0; j < outw; ++j) o[j] += xi * w[j];
    }
  }
  Shape shape = x.shape();
  shape.back() = outw;
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor::record(
      "linear", std::move(shape), std::move(out), inputs,
      [x, weight, rows, in, outw](std::span<const double> g, Grads& gin) {
        auto xv = x.data(), wv = weight.data();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data() + r * outw;
          if (!gin[0].empty()) {
            for (std::size_t i = 0; i < in; ++i) {
              const double* w = wv.data() + i * outw;
              double acc = 0.0;
              for (std::size_t j = 0; j < outw; ++j) acc += gr[j] * w[j];
              gin[0][r * in + i] += acc;
            }
          }
          if (!gin[1].empty()) {
            for (std::size_t i = 0; i < in; ++i) {
              const double xi = xv[r * in + i];
              double* gw = gin[1].data() + i * outw;
              for (std::size_t j = 0; j < outw; ++j) gw[j] += xi * gr[j];
            }
          }
          if (gin.size() > 2 && !gin[2].empty()) {
            for (std::size_t j = 0; j < outw; ++j) gin[2][j] += gr[j];
          }
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad) {
  require_rank("conv2d", x, 4, "(B, H, W, Cin)");
  require_rank("conv2d", weight, 4, "(kh, kw, Cin, Cout)");
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), Cin = x.dim(3);
  const std::size_t KH = weight.dim(0), KW = weight.dim(1), Cout = weight.dim(3);
  if (weight.dim(2) != Cin) {
    dim_error("conv2d", "input channels " + std::to_string(Cin) + " vs weight axis 2 of " +
                            shape_str(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != Cout)) {
    dim_error("conv2d", "bias " + shape_str(bias.shape()) + " vs Cout " + std::to_string(Cout));
  }
  const std::size_t OH = conv_out("conv2d", H, KH, stride, pad, "height");
  const std::size_t OW = conv_out("conv2d", W, KW, stride, pad, "width");

  std::vector<double> out(B * OH * OW * Cout, 0.0);
  auto xv = x.data(), wv = weight.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t oy = 0; oy < OH; ++oy)
      for (std::size_t ox = 0; ox < OW; ++ox) {
        double* o = out.data() + ((b * OH + oy) * OW + ox) * Cout;
        if (bias.defined()) std::copy(bias.data().begin(), bias.data().end(), o);
        for (std::size_t ky = 0; ky < KH; ++ky) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(H)) continue;
          for (std::size_t kx = 0; kx < KW; ++kx) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix < 0 || ix >= static_cast<long>(W)) continue;
            const double* xp = xv.data() + ((b * H + iy) * W + ix) * Cin;
            const double* wp = wv.data() + (ky * KW + kx) * Cin * Cout;
            for (std::size_t ci = 0; ci < Cin; ++ci) {
              const double xval = xp[ci];
              const double* w = wp + ci * Cout;
              for (std::size_t co = 0; co < Cout; ++co) o[co] += xval * w[co];
            }
          }
        }
      }

  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor::record(
      "conv2d", {B, OH, OW, Cout}, std::move(out), inputs,
      [=](std::span<const double> g, Grads& gin) {
        auto xv = x.data(), wv = weight.data();
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t oy = 0; oy < OH; ++oy)
            for (std::size_t ox = 0; ox < OW; ++ox) {
              const double* go = g.data() + ((b * OH + oy) * OW + ox) * Cout;
              if (gin.size() > 2 && !gin[2].empty())
                for (std::size_t co = 0; co < Cout; ++co) gin[2][co] += go[co];
              for (std::size_t ky = 0; ky < KH; ++ky) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                if (iy < 0 || iy >= static_cast<long>(H)) continue;
                for (std::size_t kx = 0; kx < KW; ++kx) {
                  const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                  if (ix < 0 || ix >= static_cast<long>(W)) continue;
                  const std::size_t xoff = ((b * H + iy) * W + ix) * Cin;
                  const std::size_t woff = (ky * KW + kx) * Cin * Cout;
                  for (std::size_t ci = 0; ci < Cin; ++ci) {
                    const double* w = wv.data() + woff + ci * Cout;
                    if (!gin[0].empty()) {
                      double acc = 0.0;
                      for (std::size_t co = 0; co < Cout; ++co) acc += go[co] * w[co];
                      gin[0][xoff + ci] += acc;
                    }
                    if (!gin[1].empty()) {
                      const double xval = xv[xoff + ci];
                      double* gw = gin[1].data() + woff + ci * Cout;
                      for (std::size_t co = 0; co < Cout; ++co) gw[co] += xval * go[co];
                    }
                  }
                }
              }
            }
      });
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        std::size_t stride, std::size_t pad) {
  require_rank("depthwise_conv2d", x, 4, "(B, H, W, C)");
  require_rank("depthwise_conv2d", weight, 3, "(kh, kw, C)");
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const std::size_t KH = weight.dim(0), KW = weight.dim(1);
  if (weight.dim(2) != C) {
    dim_error("depthwise_conv2d", "input channels " + std::to_string(C) +
                                      " vs weight axis 2 of " + shape_str(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != C)) {
    dim_error("depthwise_conv2d", "bias " + shape_str(bias.shape()) + " vs C " + std::to_string(C));
  }
  const std::size_t OH = conv_out("depthwise_conv2d", H, KH, stride, pad, "height");
  const std::size_t OW = conv_out("depthwise_conv2d", W, KW, stride, pad, "width");

  std::vector<double> out(B * OH * OW * C, 0.0);
  auto xv = x.data(), wv = weight.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t oy = 0; oy < OH; ++oy)
      for (std::size_t ox = 0; ox < OW; ++ox) {
        double* o = out.data() + ((b * OH + oy) * OW + ox) * C;
        if (bias.defined()) std::copy(bias.data().begin(), bias.data().end(), o);
        for (std::size_t ky = 0; ky < KH; ++ky) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(H)) continue;
          for (std::size_t kx = 0; kx < KW; ++kx) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix < 0 || ix >= static_cast<long>(W)) continue;
            const double* xp = xv.data() + ((b * H + iy) * W + ix) * C;
            const double* w = wv.data() + (ky * KW + kx) * C;
            for (std::size_t c = 0; c < C; ++c) o[c] += xp[c] * w[c];
          }
        }
      }

  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor::record(
      "depthwise_conv2d", {B, OH, OW, C}, std::move(out), inputs,
      [=](std::span<const double> g, Grads& gin) {
        auto xv = x.data(), wv = weight.data();
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t oy = 0; oy < OH; ++oy)
            for (std::size_t ox = 0; ox < OW; ++ox) {
              const double* go = g.data() + ((b * OH + oy) * OW + ox) * C;
              if (gin.size() > 2 && !gin[2].empty())
                for (std::size_t c = 0; c < C; ++c) gin[2][c] += go[c];
              for (std::size_t ky = 0; ky < KH; ++ky) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                if (iy < 0 || iy >= static_cast<long>(H)) continue;
                for (std::size_t kx = 0; kx < KW; ++kx) {
                  const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                  if (ix < 0 || ix >= static_cast<long>(W)) continue;
                  const std::size_t xoff = ((b * H + iy) * W + ix) * C;
                  const std::size_t woff = (ky * KW + kx) * C;
                  for (std::size_t c = 0; c < C; ++c) {
                    if (!gin[0].empty()) gin[0][xoff + c] += go[c] * wv[woff + c];
                    if (!gin[1].empty()) gin[1][woff + c] += go[c] * xv[xoff + c];
                  }
                }
              }
            }
      });
}

Tensor conv1d_last(const Tensor& x, const Tensor& weight) {
  require_rank("conv1d_last", weight, 1, "(k)");
  const std::size_t k = weight.dim(0);
  if (k % 2 == 0) dim_error("conv1d_last", "kernel size " + std::to_string(k) + " must be odd");
  if (x.rank() == 0) dim_error("conv1d_last", "scalar input");
  const std::size_t D = x.shape().back(), rows = x.numel() / D;
  const long half = static_cast<long>(k / 2);
  std::vector<double> out(x.numel(), 0.0);
  auto xv = x.data(), wv = weight.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t d = 0; d < D; ++d) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) {
        const long src = static_cast<long>(d) + static_cast<long>(t) - half;
        if (src < 0 || src >= static_cast<long>(D)) continue;
        acc += wv[t] * xv[r * D + src];
      }
      out[r * D + d] = acc;
    }
  return Tensor::record(
      "conv1d_last", x.shape(), std::move(out), {x, weight},
      [x, weight, rows, D, k, half](std::span<const double> g, Grads& gin) {
        auto xv = x.data(), wv = weight.data();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t d = 0; d < D; ++d)
            for (std::size_t t = 0; t < k; ++t) {
              const long src = static_cast<long>(d) + static_cast<long>(t) - half;
              if (src < 0 || src >= static_cast<long>(D)) continue;
              if (!gin[0].empty()) gin[0][r * D + src] += g[r * D + d] * wv[t];
              if (!gin[1].empty()) gin[1][t] += g[r * D + d] * xv[r * D + src];
            }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) dim_error("layer_norm", "scalar input");
  const std::size_t D = x.shape().back(), rows = x.numel() / D;
  if (gamma.shape() != Shape{D} || beta.shape() != Shape{D}) {
    dim_error("layer_norm", "gain " + shape_str(gamma.shape()) + " / bias " +
                                shape_str(beta.shape()) + " must be (" + std::to_string(D) + ")");
  }
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  auto xv = x.data(), gv = gamma.data(), bv = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * D;
    double mean = 0.0;
    for (std::size_t d = 0; d < D; ++d) mean += xr[d];
    mean /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t d = 0; d < D; ++d) var += (xr[d] - mean) * (xr[d] - mean);
    var /= static_cast<double>(D);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t d = 0; d < D; ++d) {
      xhat[r * D + d] = (xr[d] - mean) * inv_std[r];
      out[r * D + d] = xhat[r * D + d] * gv[d] + bv[d];
    }
  }
  return Tensor::record(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [gamma, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, D](
          std::span<const double> g, Grads& gin) {
        auto gv = gamma.data();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data() + r * D;
          const double* xh = xhat.data() + r * D;
          if (!gin[1].empty())
            for (std::size_t d = 0; d < D; ++d) gin[1][d] += gr[d] * xh[d];
          if (!gin[2].empty())
            for (std::size_t d = 0; d < D; ++d) gin[2][d] += gr[d];
          if (!gin[0].empty()) {
            // dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t d = 0; d < D; ++d) {
              const double dxh = gr[d] * gv[d];
              m1 += dxh;
              m2 += dxh * xh[d];
            }
            m1 /= static_cast<double>(D);
            m2 /= static_cast<double>(D);
            for (std::size_t d = 0; d < D; ++d) {
              const double dxh = gr[d] * gv[d];
              gin[0][r * D + d] += inv_std[r] * (dxh - m1 - xh[d] * m2);
            }
          }
        }
      });
}

}  // namespace mambahash::ops
