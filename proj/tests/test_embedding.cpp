#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "comac/embedding.hpp"
#include "comac/random.hpp"

namespace comac {
namespace {

TEST(HashEmbed, DeterministicAndShaped) {
  auto e = make_entry("x", Role::persona, "a b a");
  auto m1 = hash_embed(e, 16), m2 = hash_embed(e, 16);
  EXPECT_EQ(m1, m2);
  EXPECT_EQ(m1.rows.rows(), 3u);
  EXPECT_EQ(m1.rows.cols(), 16u);
  EXPECT_TRUE(std::equal(m1.rows.row(0).begin(), m1.rows.row(0).end(), m1.rows.row(2).begin()));
  EXPECT_FALSE(std::equal(m1.rows.row(0).begin(), m1.rows.row(0).end(), m1.rows.row(1).begin()));
  for (float v : m1.rows.data()) {
    EXPECT_GE(v, -1.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(HashEmbed, NoCollisionsOnRandomVocabulary) {
  SplitMix64 rng(42);
  std::set<std::string> vocab;
  while (vocab.size() < 10000) {
    std::string w;
    const auto len = 1 + uniform_index(rng, 10);
    for (std::uint64_t i = 0; i < len; ++i) w += static_cast<char>('a' + uniform_index(rng, 26));
    vocab.insert(w);
  }
  std::set<std::vector<float>> rows;
  std::vector<float> row(16);
  for (const auto& w : vocab) {
    hash_embed_row(w, row);
    rows.insert(row);
  }
  EXPECT_EQ(rows.size(), vocab.size());
}

TEST(HashEmbed, RejectsTinyDimension) {
  EXPECT_THROW(hash_embed(make_entry("x", Role::persona, "a"), 3), ConfigError);
}

std::vector<TokenMatrix> sample_entries() {
  std::vector<TokenMatrix> v;
  v.push_back(hash_embed(make_entry("d#0/u", Role::utterance, "where is it ?"), 8));
  v.push_back(hash_embed(make_entry("d#0/p0", Role::persona, "i love lighthouses"), 8));
  v.back().rows(1, 3) = -0.0f;
  v.back().rows(2, 5) = 1e-30f;
  return v;
}

TEST(EmbeddingFile, RoundTripIsBitExact) {
  const auto entries = sample_entries();
  const auto bytes = encode_embeddings(entries);
  const auto back = decode_embeddings(bytes);
  ASSERT_EQ(back.size(), entries.size());
  for (const auto& e : entries) {
    const auto& got = back.at(e.entry_id);
    EXPECT_EQ(got.surfaces, e.surfaces);
    ASSERT_EQ(got.rows.data().size(), e.rows.data().size());
    EXPECT_EQ(std::memcmp(got.rows.data().data(), e.rows.data().data(),
                          e.rows.data().size() * sizeof(float)),
              0);
  }
  EXPECT_EQ(encode_embeddings(std::vector<TokenMatrix>{back.at("d#0/u"), back.at("d#0/p0")}),
            bytes);
}

TEST(EmbeddingFile, HeaderLayoutIsLittleEndian) {
  const auto bytes = encode_embeddings(sample_entries());
  ASSERT_GE(bytes.size(), 16u);
  EXPECT_EQ(bytes.substr(0, 4), "CMAC");
  EXPECT_EQ(bytes.substr(4, 4), std::string("\x01\x00\x00\x00", 4));  // version
  EXPECT_EQ(bytes.substr(8, 4), std::string("\x08\x00\x00\x00", 4));  // d
  EXPECT_EQ(bytes.substr(12, 4), std::string("\x02\x00\x00\x00", 4)); // entries
  EXPECT_EQ(bytes.substr(16, 2), std::string("\x05\x00", 2));         // id length
  EXPECT_EQ(bytes.substr(18, 5), "d#0/u");
}

TEST(EmbeddingFile, BadMagic) {
  auto bytes = encode_embeddings(sample_entries());
  bytes.replace(0, 4, "XXXX");
  EXPECT_THROW(decode_embeddings(bytes), FormatError);
}

TEST(EmbeddingFile, DeclaredDimensionMismatch) {
  const auto bytes = encode_embeddings(sample_entries());
  EXPECT_THROW(decode_embeddings(bytes, 16), FormatError);
  EXPECT_NO_THROW(decode_embeddings(bytes, 8));
}

TEST(EmbeddingFile, TruncationDetected) {
  auto entries = sample_entries();
  auto bytes = encode_embeddings(entries);
  // Header says 2 entries, only the first record is present.
  auto one = encode_embeddings(std::vector<TokenMatrix>{entries[0]});
  one[12] = 2;
  EXPECT_THROW(decode_embeddings(one), FormatError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1})
    EXPECT_THROW(decode_embeddings(bytes.substr(0, cut)), FormatError) << cut;
  EXPECT_THROW(decode_embeddings(bytes + "x"), FormatError);
}

TEST(EmbeddingFile, RejectsNonFiniteValues) {
  auto entries = sample_entries();
  entries[0].rows(0, 0) = std::nanf("");
  EXPECT_THROW(decode_embeddings(encode_embeddings(entries)), FormatError);
}

TEST(Reduce, HandComputedProjection) {
  ReductionLayer layer{Matrix<double>(8, 2), true};
  layer.weight(0, 0) = 1.0;
  layer.weight(1, 1) = 1.0;
  TokenMatrix m{"x", {"t"}, Matrix<float>(1, 8)};
  m.rows(0, 0) = 2.0f;
  auto r = reduce(m, layer);
  ASSERT_EQ(r.rows.rows(), 1u);
  ASSERT_EQ(r.rows.cols(), 2u);
  EXPECT_DOUBLE_EQ(r.rows(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(r.rows(0, 1), 0.0);
}

TEST(Reduce, RowsAreUnitNormAndScaleInvariant) {
  auto layer = make_reduction_layer(8, 2, 3);
  auto m = hash_embed(make_entry("x", Role::knowledge, "one two three"), 8);
  auto r = reduce(m, layer);
  EXPECT_EQ(r.rows.rows(), 3u);
  EXPECT_EQ(r.rows.cols(), 2u);
  for (std::size_t t = 0; t < 3; ++t)
    EXPECT_NEAR(std::sqrt(dot(r.rows.row(t), r.rows.row(t))), 1.0, 1e-6);

  auto scaled = m;
  for (auto& v : scaled.rows.row(1)) v *= 3.5f;
  auto rs = reduce(scaled, layer);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(rs.rows(1, c), r.rows(1, c), 1e-6);
}

TEST(Reduce, Errors) {
  auto layer = make_reduction_layer(8, 0, 1);
  EXPECT_EQ(layer.output_dim(), 2u);
  auto wrong = hash_embed(make_entry("x", Role::persona, "a"), 16);
  EXPECT_THROW(reduce(wrong, layer), ShapeError);
  TokenMatrix zero{"z", {"t"}, Matrix<float>(1, 8)};
  EXPECT_THROW(reduce(zero, layer), DegenerateRow);
  EXPECT_THROW(make_reduction_layer(10, 0, 1), ConfigError);
}

TEST(Reduce, DefaultWidthIsQuarterAndInitIsBounded) {
  auto layer = make_reduction_layer(64, 0, 9);
  EXPECT_EQ(layer.output_dim(), 16u);
  for (double w : layer.weight.data()) EXPECT_LE(std::abs(w), 1.0 / 8.0);
  EXPECT_EQ(make_reduction_layer(64, 0, 9).weight, layer.weight);
  EXPECT_NE(make_reduction_layer(64, 0, 10).weight, layer.weight);
}

}  // namespace
}  // namespace comac
