#include "mambahash/objective.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mambahash/errors.hpp"
#include "mambahash/ops.hpp"

namespace mambahash {

namespace {

double softplus(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }

double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

void require_codes(const char* op, const Tensor& h) {
  if (h.rank() != 2) throw DimensionError(std::string(op) + ": codes must be (B, K), got " + shape_str(h.shape()));
  for (double v : h.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite code value");
  }
}

}  // namespace

SimilarityMatrix::SimilarityMatrix(std::size_t n, std::vector<std::uint8_t> values)
    : n_(n), values_(std::move(values)) {
  if (values_.size() != n_ * n_) throw DimensionError("similarity_matrix: value count is not n*n");
}

bool labels_intersect(const LabelSet& a, const LabelSet& b) {
  for (auto x : a)
    if (std::find(b.begin(), b.end(), x) != b.end()) return true;
  return false;
}

SimilarityMatrix similarity_matrix(const std::vector<LabelSet>& labels) {
  if (labels.empty()) throw DataError("similarity_matrix: empty batch");
  const std::size_t n = labels.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i].empty()) throw DataError("similarity_matrix: item " + std::to_string(i) + " has no labels");
  }
  std::vector<std::uint8_t> s(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) s[i * n + j] = s[j * n + i] = labels_intersect(labels[i], labels[j]);
  return SimilarityMatrix(n, std::move(s));
}

double pair_nll(double theta, bool similar) {
  return softplus(theta) - (similar ? theta : 0.0);
}

Tensor pairwise_nll(const Tensor& h, const SimilarityMatrix& s) {
  require_codes("pairwise_nll", h);
  const std::size_t B = h.dim(0), K = h.dim(1);
  if (s.size() != B) {
    throw DimensionError("pairwise_nll: similarity matrix is " + std::to_string(s.size()) +
                         "x" + std::to_string(s.size()) + " but batch is " + std::to_string(B));
  }
  auto hv = h.data();
  auto theta = [hv, K](std::size_t i, std::size_t j) {
    double dot = 0.0;
    for (std::size_t k = 0; k < K; ++k) dot += hv[i * K + k] * hv[j * K + k];
    return 0.5 * dot;
  };
  double total = 0.0;
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = i + 1; j < B; ++j) total += pair_nll(theta(i, j), s(i, j) != 0);

  return Tensor::record(
      "pairwise_nll", {1}, {total}, {h},
      [h, s, B, K](std::span<const double> g, std::vector<std::span<double>>& gin) {
        auto hv = h.data();
        for (std::size_t i = 0; i < B; ++i)
          for (std::size_t j = i + 1; j < B; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < K; ++k) dot += hv[i * K + k] * hv[j * K + k];
            // d/dtheta = sigmoid(theta) - s; dtheta/dh_i = h_j / 2
            const double coef = g[0] * (sigmoid(0.5 * dot) - (s(i, j) ? 1.0 : 0.0)) * 0.5;
            for (std::size_t k = 0; k < K; ++k) {
              gin[0][i * K + k] += coef * hv[j * K + k];
              gin[0][j * K + k] += coef * hv[i * K + k];
            }
          }
      });
}

Tensor quantization_loss(const Tensor& h) {
  require_codes("quantization_loss", h);
  auto hv = h.data();
  double total = 0.0;
  for (double v : hv) {
    const double r = v - (v >= 0.0 ? 1.0 : -1.0);
    total += r * r;
  }
  return Tensor::record("quantization_loss", {1}, {total}, {h},
                        [h](std::span<const double> g, std::vector<std::span<double>>& gin) {
                          auto hv = h.data();
                          for (std::size_t i = 0; i < hv.size(); ++i) {
                            gin[0][i] += g[0] * 2.0 * (hv[i] - (hv[i] >= 0.0 ? 1.0 : -1.0));
                          }
                        });
}

LossResult total_loss(const Tensor& h, const SimilarityMatrix& s, double eta) {
  if (!(eta >= 0.0)) throw ContractError("total_loss: eta must be >= 0");
  Tensor nll = pairwise_nll(h, s);
  Tensor quant = quantization_loss(h);
  Tensor total = ops::add(nll, ops::scale(quant, eta));
  LossResult r;
  r.total = total;
  r.breakdown.nll_term = nll.item();
  r.breakdown.quant_term = quant.item();
  r.breakdown.total = total.item();
  const std::size_t B = h.dim(0);
  r.breakdown.pair_count = B * (B - 1) / 2;
  return r;
}

}  // namespace mambahash
