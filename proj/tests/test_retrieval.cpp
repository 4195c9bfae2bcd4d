#include "doctest.h"

#include <random>

#include "mambahash/errors.hpp"
#include "mambahash/params.hpp"
#include "mambahash/retrieval.hpp"

using namespace mambahash;

namespace {

PackedCodes codes_from(const std::vector<std::vector<int>>& rows, std::vector<LabelSet> labels = {}) {
  std::vector<double> flat;
  for (const auto& r : rows)
    for (int v : r) flat.push_back(v);
  return binarize_pack(flat, rows.size(), rows.empty() ? 0 : rows[0].size(), std::move(labels));
}

}  // namespace

TEST_CASE("bit layout") {
  const PackedCodes p = binarize_pack(std::vector<double>{0.5, -0.5, 0.0}, 1, 3);
  CHECK(p.words()[0] == 5u);
  const PackedCodes ones = binarize_pack(std::vector<double>(16, 0.9), 1, 16);
  CHECK(ones.words()[0] == (1u << 16) - 1);
  const PackedCodes full = binarize_pack(std::vector<double>(64, 0.9), 1, 64);
  CHECK(full.words()[0] == ~std::uint64_t{0});
  std::vector<double> h(70);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = (i % 3 == 0) ? -0.2 : 0.4;
  const PackedCodes wide = binarize_pack(h, 1, 70);
  CHECK(wide.words_per_code() == 2);
  const auto u = wide.unpack(0);
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(u[i] == (h[i] >= 0 ? 1 : -1));
  CHECK_THROWS_AS(PackedCodes(3, {8u}, {}), ContractError);
}

TEST_CASE("hamming distance") {
  const PackedCodes a = codes_from({std::vector<int>(16, 1), std::vector<int>(16, -1)});
  CHECK(hamming_distance(a.code(0), a.code(0)) == 0);
  CHECK(hamming_distance(a.code(0), a.code(1)) == 16);
  const PackedCodes b = codes_from({std::vector<int>(8, 1)});
  CHECK_THROWS_AS(hamming_distance(a.code(0), b.code(0)), ContractError);
}

TEST_CASE("hamming metric properties") {
  Rng rng(3);
  std::bernoulli_distribution coin(0.5);
  std::vector<std::vector<int>> rows(60, std::vector<int>(48));
  for (auto& r : rows)
    for (auto& v : r) v = coin(rng) ? 1 : -1;
  const PackedCodes p = codes_from(rows);
  for (std::size_t i = 0; i + 2 < rows.size(); ++i) {
    const auto ab = hamming_distance(p.code(i), p.code(i + 1));
    CHECK(ab == hamming_distance(p.code(i + 1), p.code(i)));
    CHECK(hamming_distance(p.code(i), p.code(i + 2)) <= ab + hamming_distance(p.code(i + 1), p.code(i + 2)));
  }
}

TEST_CASE("search order and ties") {
  const std::vector<int> q{1, 1, 1, 1};
  const PackedCodes db = codes_from({{-1, -1, 1, 1}, {1, 1, 1, 1}, {1, 1, 1, -1}});
  const PackedCodes qp = codes_from({q});
  const auto r = search_topk(qp.code(0), db, 3);
  REQUIRE(r.hits.size() == 3);
  CHECK(r.hits[0] == Hit{1, 0});
  CHECK(r.hits[1] == Hit{2, 1});
  CHECK(r.hits[2] == Hit{0, 2});
  CHECK_FALSE(r.truncated);
  const auto big = search_topk(qp.code(0), db, 10);
  CHECK(big.truncated);
  CHECK(big.hits.size() == 3);
  CHECK_THROWS_AS(search_topk(qp.code(0), db, 0), ContractError);

  const PackedCodes tied = codes_from({{1, 1, 1, -1}, {1, 1, -1, 1}, {1, 1, 1, 1}});
  const auto t = search_topk(qp.code(0), tied, 3);
  CHECK(t.hits[0].index == 2);
  CHECK(t.hits[1].index == 0);
  CHECK(t.hits[2].index == 1);
}

TEST_CASE("average precision") {
  const PackedCodes q = codes_from({{1, 1, 1, 1}}, {{0}});
  const PackedCodes db = codes_from({{1, 1, 1, 1}, {1, 1, 1, -1}, {1, 1, -1, -1}}, {{0}, {1}, {0}});
  const auto rep = mean_average_precision(q, db, 0);
  CHECK(rep.map == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(mean_average_precision(q, db, 1).map == 1.0);
  CHECK(mean_average_precision(q, db, 2).map == 1.0);

  const PackedCodes all_rel = codes_from({{1, -1, 1, 1}, {-1, -1, -1, 1}}, {{0}, {0}});
  CHECK(mean_average_precision(q, all_rel, 0).map == 1.0);

  const PackedCodes q2 = codes_from({{1, 1, 1, 1}, {1, 1, 1, 1}}, {{0}, {7}});
  const auto ex = mean_average_precision(q2, db, 0);
  CHECK(ex.included == 1);
  CHECK(ex.excluded == 1);
  CHECK(ex.map == doctest::Approx(5.0 / 6.0));

  CHECK(precision_at_k(q, db, 2) == 0.5);
  CHECK_THROWS_AS(mean_average_precision(q, codes_from({{1, 1, 1, 1}}), 0), ContractError);
}

TEST_CASE("code file round trip and rejection") {
  const PackedCodes codes = codes_from({{1, -1, 1}, {-1, -1, 1}}, {{3}, {1, 2}});
  const auto bytes = encode_code_file(codes);
  CHECK(bytes[0] == 'M');
  CHECK(bytes[3] == 'C');
  CHECK(decode_code_file(bytes) == codes);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_code_file(bad), FormatError);
  bad = bytes;
  bad[4] = 9;
  CHECK_THROWS_AS(decode_code_file(bad), FormatError);
  try {
    decode_code_file(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 1));
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() > 0);
  }
  auto extra = bytes;
  extra.push_back(0);
  CHECK_THROWS_AS(decode_code_file(extra), FormatError);
  CHECK_THROWS_AS(load_codes("/nonexistent/codes.mbhc"), IoError);
}
