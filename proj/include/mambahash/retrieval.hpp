#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mambahash/objective.hpp"
#include "mambahash/tensor.hpp"

namespace mambahash {

// A single packed code: bit b of the code lives in word b / 64 at position
// b % 64 and is set iff coordinate b is +1.
struct CodeView {
  std::span<const std::uint64_t> words;
  std::size_t bits;
};

// Immutable bit-packed code database with per-code label sets.
class PackedCodes {
 public:
  PackedCodes() = default;
  // `words` holds count * words_for(bits) entries. Labels may be empty
  // (no labels at all) or hold exactly one set per code.
  PackedCodes(std::size_t bits, std::vector<std::uint64_t> words, std::vector<LabelSet> labels);

  static std::size_t words_for(std::size_t bits) { return (bits + 63) / 64; }

  std::size_t bits() const { return bits_; }
  std::size_t size() const { return count_; }
  std::size_t words_per_code() const { return words_for(bits_); }
  bool has_labels() const { return !labels_.empty(); }

  CodeView code(std::size_t i) const;
  const LabelSet& labels(std::size_t i) const;
  const std::vector<std::uint64_t>& words() const { return words_; }
  const std::vector<LabelSet>& all_labels() const { return labels_; }

  // +1 / -1 coordinates of code i.
  std::vector<int> unpack(std::size_t i) const;

  bool operator==(const PackedCodes&) const = default;

 private:
  std::size_t bits_ = 0;
  std::size_t count_ = 0;
  std::vector<std::uint64_t> words_;
  std::vector<LabelSet> labels_;
};

// sign(h) with sign(0) = +1, packed row by row. h is (B, K).
PackedCodes binarize_pack(const Tensor& h, std::vector<LabelSet> labels = {});
PackedCodes binarize_pack(std::span<const double> h, std::size_t rows, std::size_t bits,
                          std::vector<LabelSet> labels = {});

// popcount(a XOR b). Throws ContractError when the code lengths differ.
std::size_t hamming_distance(const CodeView& a, const CodeView& b);

struct Hit {
  std::size_t index;
  std::size_t distance;
  bool operator==(const Hit&) const = default;
};

struct RankedResult {
  std::vector<Hit> hits;  // ascending distance, ties by ascending index
  bool truncated = false;  // requested topk exceeded the database size
};

// The topk nearest database codes. topk must be >= 1; larger than the
// database returns everything with `truncated` set.
RankedResult search_topk(const CodeView& query, const PackedCodes& db, std::size_t topk);

struct MapReport {
  double map = 0.0;
  std::size_t included = 0;  // queries with at least one relevant database item
  std::size_t excluded = 0;
  std::vector<double> per_query;  // AP per included query, in query order
};

// MAP over the top `topk` results (0 = whole database). Relevance is label
// intersection. AP divides by the number of relevant hits inside the cutoff.
MapReport mean_average_precision(const PackedCodes& queries, const PackedCodes& db,
                                 std::size_t topk);

// Mean fraction of relevant items among the first k results.
double precision_at_k(const PackedCodes& queries, const PackedCodes& db, std::size_t k);

// Code file: "MBHC", u32 version, u32 K, u64 N, per-code labels
// (u16 count, u32 ids), then N * ceil(K/64) u64 words, all little-endian.
inline constexpr std::uint32_t kCodeFileVersion = 1;
std::vector<std::uint8_t> encode_code_file(const PackedCodes& codes);
PackedCodes decode_code_file(std::span<const std::uint8_t> bytes);
void save_codes(const std::string& path, const PackedCodes& codes);
PackedCodes load_codes(const std::string& path);

}  // namespace mambahash
