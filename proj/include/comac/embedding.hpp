#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "comac/corpus.hpp"
#include "comac/error.hpp"
#include "comac/matrix.hpp"
#include "comac/random.hpp"

namespace comac {

/// Frozen token embeddings of one text entry (s x d, float32).
struct TokenMatrix {
  std::string entry_id;
  std::vector<std::string> surfaces;
  Matrix<float> rows;

  std::size_t tokens() const { return rows.rows(); }
  std::size_t dim() const { return rows.cols(); }

  friend bool operator==(const TokenMatrix&, const TokenMatrix&) = default;
};

/// Token rows after projection to d0 (and, by default, L2 normalization).
struct ReducedMatrix {
  std::string entry_id;
  Matrix<double> rows;

  std::size_t tokens() const { return rows.rows(); }
  std::size_t dim() const { return rows.cols(); }
};

inline constexpr std::uint64_t kHashEmbedSeed = 0xC0FFEE5EED5ULL;

/// Deterministic stand-in for a language model encoder: each row depends
/// only on the token surface.
inline void hash_embed_row(std::string_view surface, std::span<float> out) {
  std::uint64_t state = fnv1a64(surface) ^ kHashEmbedSeed;
  for (auto& v : out) {
    auto bits = splitmix64(state) >> 40;  // 24 bits
    v = static_cast<float>(static_cast<double>(bits) * 0x1.0p-23 - 1.0);
  }
}

inline TokenMatrix hash_embed(const TextEntry& entry, std::size_t d) {
  if (d < 4) throw ConfigError("embedding dimension must be >= 4");
  if (entry.tokens.empty()) throw EmptyEntry("entry '" + entry.id + "' has no tokens");
  TokenMatrix m{entry.id, surfaces(entry.tokens), Matrix<float>(entry.tokens.size(), d)};
  for (std::size_t i = 0; i < entry.tokens.size(); ++i)
    hash_embed_row(entry.tokens[i].surface, m.rows.row(i));
  return m;
}

// ---------------------------------------------------------------------------
// Binary embedding file
//
//   "CMAC" | u32 version=1 | u32 d | u32 entry_count
//   per entry: u16 id_len, id | u32 token_count | token_count x (u16 len,
//              surface) | token_count*d float32 row-major
//
// All integers and floats little-endian.
// ---------------------------------------------------------------------------

inline constexpr char kEmbeddingMagic[4] = {'C', 'M', 'A', 'C'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i)
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, sizeof u);
    le(u);
  }
  void str16(std::string_view s) {
    if (s.size() > 0xFFFF) throw FormatError("string longer than 65535 bytes");
    le(static_cast<std::uint16_t>(s.size()));
    bytes(s);
  }
  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::string_view bytes(std::size_t n) {
    need(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  template <typename U>
  U le() {
    auto b = bytes(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  float f32() {
    auto u = le<std::uint32_t>();
    float f;
    std::memcpy(&f, &u, sizeof f);
    return f;
  }
  std::string str16() { return std::string(bytes(le<std::uint16_t>())); }
  bool done() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError("truncated embedding file");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace detail

/// Serializes matrices (in the given order) into the binary format.
/// All matrices must share one row width.
inline std::string encode_embeddings(std::span<const TokenMatrix> entries) {
  std::size_t d = entries.empty() ? 0 : entries.front().dim();
  detail::ByteWriter w;
  w.bytes({kEmbeddingMagic, 4});
  w.le(kEmbeddingVersion);
  w.le(static_cast<std::uint32_t>(d));
  w.le(static_cast<std::uint32_t>(entries.size()));
  for (const auto& m : entries) {
    if (m.dim() != d) throw ShapeError("mixed embedding dimensions in export");
    if (m.surfaces.size() != m.tokens())
      throw ShapeError("surface count does not match row count for '" + m.entry_id + "'");
    w.str16(m.entry_id);
    w.le(static_cast<std::uint32_t>(m.tokens()));
    for (const auto& s : m.surfaces) w.str16(s);
    for (float v : m.rows.data()) w.f32(v);
  }
  return w.buffer();
}

/// Parses the binary format. `expected_dim`, when non-zero, must equal the
/// header dimension.
inline std::map<std::string, TokenMatrix> decode_embeddings(
    std::string_view bytes, std::size_t expected_dim = 0) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 4 || r.bytes(4) != std::string_view(kEmbeddingMagic, 4))
    throw FormatError("bad magic");
  auto version = r.le<std::uint32_t>();
  if (version != kEmbeddingVersion)
    throw FormatError("unsupported version " + std::to_string(version));
  auto d = r.le<std::uint32_t>();
  if (d == 0) throw FormatError("embedding dimension is zero");
  if (expected_dim != 0 && d != expected_dim)
    throw FormatError("header dimension " + std::to_string(d) +
                      " differs from declared dimension " + std::to_string(expected_dim));
  auto count = r.le<std::uint32_t>();

  std::map<std::string, TokenMatrix> out;
  for (std::uint32_t e = 0; e < count; ++e) {
    TokenMatrix m;
    m.entry_id = r.str16();
    auto s = r.le<std::uint32_t>();
    if (s == 0) throw FormatError("entry '" + m.entry_id + "' has no tokens");
    // Each surface needs at least its 2-byte length prefix.
    if (r.remaining() / 2 < s) throw FormatError("truncated embedding file");
    m.surfaces.reserve(s);
    for (std::uint32_t t = 0; t < s; ++t) m.surfaces.push_back(r.str16());
    if (r.remaining() / 4 / d < s) throw FormatError("truncated embedding file");
    std::vector<float> values(static_cast<std::size_t>(s) * d);
    for (auto& v : values) {
      v = r.f32();
      if (!std::isfinite(v))
        throw FormatError("non-finite value in entry '" + m.entry_id + "'");
    }
    m.rows = Matrix<float>(s, d, std::move(values));
    auto id = m.entry_id;
    if (!out.emplace(id, std::move(m)).second)
      throw FormatError("duplicate entry id '" + id + "'");
  }
  if (!r.done()) throw FormatError("trailing bytes after the last entry");
  return out;
}

inline void export_embeddings(const std::string& path,
                              std::span<const TokenMatrix> entries) {
  detail::write_file(path, encode_embeddings(entries));
}

inline std::map<std::string, TokenMatrix> import_embeddings(
    const std::string& path, std::size_t expected_dim = 0) {
  return decode_embeddings(detail::read_file(path), expected_dim);
}

// ---------------------------------------------------------------------------
// Dimension reduction
// ---------------------------------------------------------------------------

struct ReductionLayer {
  Matrix<double> weight;  // d x d0
  bool trainable = true;

  std::size_t input_dim() const { return weight.rows(); }
  std::size_t output_dim() const { return weight.cols(); }
};

/// Output width used when none is configured.
inline std::size_t default_reduced_dim(std::size_t d) {
  if (d % 4 != 0)
    throw ConfigError("embedding dimension " + std::to_string(d) +
                      " is not divisible by 4");
  return d / 4;
}

/// Weights uniform in [-1/sqrt(d), 1/sqrt(d)]. `d0 == 0` selects d/4.
inline ReductionLayer make_reduction_layer(std::size_t d, std::size_t d0,
                                           std::uint64_t seed) {
  if (d0 == 0) d0 = default_reduced_dim(d);
  if (d0 > d) throw ConfigError("d0 larger than the embedding dimension");
  ReductionLayer layer{Matrix<double>(d, d0), true};
  SplitMix64 rng(mix_seed(seed, 0x5245'4455ULL));
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (auto& w : layer.weight.data()) w = uniform(rng, -bound, bound);
  return layer;
}

inline ReducedMatrix reduce(const TokenMatrix& m, const ReductionLayer& layer,
                            bool normalize = true) {
  if (m.dim() != layer.input_dim())
    throw ShapeError("entry '" + m.entry_id + "' has width " +
                     std::to_string(m.dim()) + ", reduction expects " +
                     std::to_string(layer.input_dim()));
  const std::size_t d0 = layer.output_dim();
  ReducedMatrix out{m.entry_id, Matrix<double>(m.tokens(), d0)};
  for (std::size_t t = 0; t < m.tokens(); ++t) {
    auto in = m.rows.row(t);
    auto dst = out.rows.row(t);
    for (std::size_t k = 0; k < in.size(); ++k) {
      const double x = in[k];
      if (x == 0.0) continue;
      auto w = layer.weight.row(k);
      for (std::size_t c = 0; c < d0; ++c) dst[c] += x * w[c];
    }
    if (!normalize) continue;
    double norm = std::sqrt(dot(std::span<const double>(dst), std::span<const double>(dst)));
    if (!(norm > 0.0))
      throw DegenerateRow("token " + std::to_string(t) + " of '" + m.entry_id +
                          "' projects to a zero vector");
    if (!std::isfinite(norm)) throw NumericsError("non-finite reduced row");
    for (auto& v : dst) v /= norm;
  }
  return out;
}

}  // namespace comac
