#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mambahash/tensor.hpp"

namespace mambahash {

using LabelSet = std::vector<std::uint32_t>;

// Symmetric 0/1 similarity over a batch with s_ii = 1.
class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;
  SimilarityMatrix(std::size_t n, std::vector<std::uint8_t> values);

  std::size_t size() const { return n_; }
  std::uint8_t operator()(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> values_;
};

// s_ij = 1 iff the label sets share at least one label (equality for
// single-label data). Throws DataError on an empty batch or label set.
SimilarityMatrix similarity_matrix(const std::vector<LabelSet>& labels);
bool labels_intersect(const LabelSet& a, const LabelSet& b);

// -log p(s_ij | h_i, h_j) for one pair with theta = h_i.h_j / 2, in the
// overflow-free form softplus(theta) - s * theta.
double pair_nll(double theta, bool similar);

// Sum over unordered pairs i < j of the pair likelihood term. h is (B, K).
Tensor pairwise_nll(const Tensor& h, const SimilarityMatrix& s);

// sum_i ||h_i - sign(h_i)||^2 with sign(0) = +1; the target is constant.
Tensor quantization_loss(const Tensor& h);

struct LossBreakdown {
  double nll_term = 0.0;
  double quant_term = 0.0;
  double total = 0.0;
  std::size_t pair_count = 0;
};

struct LossResult {
  Tensor total;  // scalar, taped
  LossBreakdown breakdown;
};

// total = pairwise_nll + eta * quantization_loss.
LossResult total_loss(const Tensor& h, const SimilarityMatrix& s, double eta);

}  // namespace mambahash
