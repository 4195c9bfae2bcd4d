#include "mambahash/retrieval.hpp"

#include <bit>
#include <cmath>
#include <limits>

#include "mambahash/binary_io.hpp"
#include "mambahash/errors.hpp"
#include "mambahash/parallel.hpp"

namespace mambahash {

PackedCodes::PackedCodes(std::size_t bits, std::vector<std::uint64_t> words,
                         std::vector<LabelSet> labels)
    : bits_(bits), words_(std::move(words)), labels_(std::move(labels)) {
  if (bits_ == 0) throw ContractError("packed codes: bit length must be >= 1");
  const std::size_t wpc = words_for(bits_);
  if (words_.size() % wpc != 0) {
    throw DimensionError("packed codes: word count " + std::to_string(words_.size()) +
                         " is not a multiple of " + std::to_string(wpc));
  }
  count_ = words_.size() / wpc;
  if (!labels_.empty() && labels_.size() != count_) {
    throw DimensionError("packed codes: " + std::to_string(labels_.size()) + " label sets for " +
                         std::to_string(count_) + " codes");
  }
  if (bits_ % 64 != 0) {
    const std::uint64_t mask = ~std::uint64_t{0} << (bits_ % 64);
    for (std::size_t i = 0; i < count_; ++i) {
      if (words_[i * wpc + wpc - 1] & mask) {
        throw ContractError("packed codes: code " + std::to_string(i) + " has bits set above K");
      }
    }
  }
}

CodeView PackedCodes::code(std::size_t i) const {
  const std::size_t wpc = words_per_code();
  return {std::span<const std::uint64_t>(words_).subspan(i * wpc, wpc), bits_};
}

const LabelSet& PackedCodes::labels(std::size_t i) const {
  if (labels_.empty()) throw ContractError("packed codes: no labels attached");
  return labels_.at(i);
}

std::vector<int> PackedCodes::unpack(std::size_t i) const {
  const CodeView c = code(i);
  std::vector<int> out(bits_);
  for (std::size_t b = 0; b < bits_; ++b) out[b] = (c.words[b / 64] >> (b % 64)) & 1 ? 1 : -1;
  return out;
}

PackedCodes binarize_pack(std::span<const double> h, std::size_t rows, std::size_t bits,
                          std::vector<LabelSet> labels) {
  if (h.size() != rows * bits) throw DimensionError("binarize_pack: value count is not rows * bits");
  const std::size_t wpc = PackedCodes::words_for(bits);
  std::vector<std::uint64_t> words(rows * wpc, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t b = 0; b < bits; ++b) {
      const double v = h[r * bits + b];
      if (!std::isfinite(v)) throw NumericError("binarize_pack: non-finite code value");
      if (v >= 0.0) words[r * wpc + b / 64] |= std::uint64_t{1} << (b % 64);
    }
  return PackedCodes(bits, std::move(words), std::move(labels));
}

PackedCodes binarize_pack(const Tensor& h, std::vector<LabelSet> labels) {
  if (h.rank() != 2) throw DimensionError("binarize_pack: codes must be (B, K), got " + shape_str(h.shape()));
  return binarize_pack(h.data(), h.dim(0), h.dim(1), std::move(labels));
}

std::size_t hamming_distance(const CodeView& a, const CodeView& b) {
  if (a.bits != b.bits || a.words.size() != b.words.size()) {
    throw ContractError("hamming_distance: code lengths differ (" + std::to_string(a.bits) +
                        " vs " + std::to_string(b.bits) + ")");
  }
  std::size_t d = 0;
  for (std::size_t w = 0; w < a.words.size(); ++w) d += std::popcount(a.words[w] ^ b.words[w]);
  return d;
}

namespace {

// All database indices ordered by (distance, index) via a counting sort
// over the K + 1 possible distances, truncated to `limit`.
std::vector<Hit> rank_all(const CodeView& query, const PackedCodes& db, std::size_t limit) {
  const std::size_t n = db.size();
  std::vector<std::size_t> dist(n);
  std::vector<std::size_t> bucket(db.bits() + 2, 0);
  for (std::size_t i = 0; i < n; ++i) {
    dist[i] = hamming_distance(query, db.code(i));
    ++bucket[dist[i] + 1];
  }
  for (std::size_t d = 1; d < bucket.size(); ++d) bucket[d] += bucket[d - 1];
  std::vector<Hit> sorted(n);
  for (std::size_t i = 0; i < n; ++i) sorted[bucket[dist[i]]++] = {i, dist[i]};
  if (sorted.size() > limit) sorted.resize(limit);
  return sorted;
}

}  // namespace

RankedResult search_topk(const CodeView& query, const PackedCodes& db, std::size_t topk) {
  if (topk == 0) throw ContractError("search_topk: topk must be >= 1");
  if (query.bits != db.bits()) {
    throw ContractError("search_topk: query has " + std::to_string(query.bits) +
                        " bits, database has " + std::to_string(db.bits()));
  }
  RankedResult r;
  r.truncated = topk > db.size();
  r.hits = rank_all(query, db, topk);
  return r;
}

MapReport mean_average_precision(const PackedCodes& queries, const PackedCodes& db,
                                 std::size_t topk) {
  if (queries.size() == 0) throw ContractError("mean_average_precision: empty query set");
  if (queries.bits() != db.bits()) {
    throw ContractError("mean_average_precision: query and database code lengths differ");
  }
  if (!queries.has_labels() || !db.has_labels()) {
    throw ContractError("mean_average_precision: queries and database must carry labels");
  }
  const std::size_t limit = topk == 0 ? db.size() : topk;
  const double kExcluded = -1.0;
  std::vector<double> ap(queries.size(), kExcluded);
  parallel_for(queries.size(), [&](std::size_t q) {
    const LabelSet& ql = queries.labels(q);
    bool any_relevant = false;
    for (std::size_t i = 0; i < db.size() && !any_relevant; ++i) any_relevant = labels_intersect(ql, db.labels(i));
    if (!any_relevant) return;
    const auto hits = rank_all(queries.code(q), db, limit);
    double sum = 0.0;
    std::size_t found = 0;
    for (std::size_t p = 0; p < hits.size(); ++p) {
      if (labels_intersect(ql, db.labels(hits[p].index))) {
        ++found;
        sum += static_cast<double>(found) / static_cast<double>(p + 1);
      }
    }
    ap[q] = found ? sum / static_cast<double>(found) : 0.0;
  });

  MapReport report;
  double total = 0.0;
  for (double v : ap) {
    if (v == kExcluded) {
      ++report.excluded;
      continue;
    }
    ++report.included;
    total += v;
    report.per_query.push_back(v);
  }
  report.map = report.included ? total / static_cast<double>(report.included) : 0.0;
  return report;
}

double precision_at_k(const PackedCodes& queries, const PackedCodes& db, std::size_t k) {
  if (queries.size() == 0) throw ContractError("precision_at_k: empty query set");
  if (k == 0) throw ContractError("precision_at_k: k must be >= 1");
  std::vector<double> prec(queries.size());
  parallel_for(queries.size(), [&](std::size_t q) {
    const auto hits = rank_all(queries.code(q), db, k);
    std::size_t rel = 0;
    for (const auto& h : hits) rel += labels_intersect(queries.labels(q), db.labels(h.index));
    prec[q] = hits.empty() ? 0.0 : static_cast<double>(rel) / static_cast<double>(hits.size());
  });
  double total = 0.0;
  for (double p : prec) total += p;
  return total / static_cast<double>(prec.size());
}

std::vector<std::uint8_t> encode_code_file(const PackedCodes& codes) {
  io::ByteWriter w;
  w.raw("MBHC");
  w.u32(kCodeFileVersion);
  w.u32(static_cast<std::uint32_t>(codes.bits()));
  w.u64(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (!codes.has_labels()) {
      w.u16(0);
      continue;
    }
    const auto& l = codes.labels(i);
    if (l.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ContractError("code file: too many labels on code " + std::to_string(i));
    }
    w.u16(static_cast<std::uint16_t>(l.size()));
    for (auto id : l) w.u32(id);
  }
  for (auto word : codes.words()) w.u64(word);
  return w.buffer();
}

PackedCodes decode_code_file(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (r.raw(4, "magic") != "MBHC") throw FormatError("code file: bad magic", 0);
  const std::uint64_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kCodeFileVersion) {
    throw FormatError("code file: unsupported version " + std::to_string(version), version_at);
  }
  const std::uint64_t bits_at = r.offset();
  const std::uint32_t bits = r.u32("bit length");
  if (bits == 0) throw FormatError("code file: zero bit length", bits_at);
  const std::uint64_t count = r.u64("code count");
  std::vector<LabelSet> labels(count);
  bool any_labels = false;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint16_t n = r.u16("label count");
    labels[i].reserve(n);
    for (std::uint16_t k = 0; k < n; ++k) labels[i].push_back(r.u32("label id"));
    any_labels = any_labels || n > 0;
  }
  const std::size_t wpc = PackedCodes::words_for(bits);
  const std::uint64_t words_at = r.offset();
  if (r.remaining() != count * wpc * 8) {
    throw FormatError("code file: expected " + std::to_string(count * wpc * 8) +
                          " bytes of code words, found " + std::to_string(r.remaining()),
                      words_at);
  }
  std::vector<std::uint64_t> words(count * wpc);
  for (auto& w : words) w = r.u64("code word");
  if (!any_labels) labels.clear();
  try {
    return PackedCodes(bits, std::move(words), std::move(labels));
  } catch (const ContractError& e) {
    throw FormatError(std::string("code file: ") + e.what(), words_at);
  }
}

void save_codes(const std::string& path, const PackedCodes& codes) {
  io::write_file(path, encode_code_file(codes));
}

PackedCodes load_codes(const std::string& path) { return decode_code_file(io::read_file(path)); }

}  // namespace mambahash
