#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "comac/config.hpp"
#include "comac/embedding.hpp"
#include "comac/model.hpp"
#include "comac/saliency.hpp"

namespace comac {

/// A trained model plus what inference needs to reproduce its inputs.
///
/// File layout: the line "COMAC-CKPT 1", one line of JSON header, then a
/// binary embedding-format block holding the parameter matrices
/// ("reduction": d rows of width d0, "scorer": one row of width d0).
struct Checkpoint {
  ModelState model;
  TrainConfig config;
  IdfTable idf;            // empty for the FF strategy
  std::string embedder;    // "hash" or "imported"
};

inline constexpr std::string_view kCheckpointMagic = "COMAC-CKPT 1\n";

namespace detail {

inline TokenMatrix param_block(const std::string& name, const Matrix<double>& m) {
  TokenMatrix t{name, {}, Matrix<float>(m.rows(), m.cols())};
  for (std::size_t r = 0; r < m.rows(); ++r) t.surfaces.push_back(std::to_string(r));
  for (std::size_t i = 0; i < m.data().size(); ++i)
    t.rows.data()[i] = static_cast<float>(m.data()[i]);
  return t;
}

inline Matrix<double> widen(const Matrix<float>& m) {
  Matrix<double> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.data().size(); ++i) out.data()[i] = m.data()[i];
  return out;
}

inline nlohmann::json fusion_json(const FusionParams& p) {
  return {{"w1", p.w1}, {"w2", p.w2}, {"b", p.b}};
}

inline FusionParams fusion_from(const nlohmann::json& j, Network n) {
  return {j.at("w1").get<double>(), j.at("w2").get<double>(), j.at("b").get<double>(), n};
}

}  // namespace detail

/// Parameter matrices are stored as float32; scalars are exact.
inline std::string encode_checkpoint(const Checkpoint& ck) {
  const auto& m = ck.model;
  nlohmann::json h;
  h["d"] = m.input_dim();
  h["d0"] = m.reduced_dim();
  h["strategy"] = to_string(m.strategy);
  h["normalize_tokens"] = m.normalize_tokens;
  h["embedder"] = ck.embedder;
  h["config"] = config_to_json(ck.config);
  h["pg"] = detail::fusion_json(m.pg);
  h["kg"] = detail::fusion_json(m.kg);
  h["scorer_c"] = m.scorer.c;
  h["idf"] = idf_to_json(ck.idf);

  std::vector<TokenMatrix> blocks;
  blocks.push_back(detail::param_block("reduction", m.reduction.weight));
  blocks.push_back(detail::param_block(
      "scorer", Matrix<double>(1, m.scorer.v.size(), m.scorer.v)));
  return std::string(kCheckpointMagic) + h.dump() + "\n" + encode_embeddings(blocks);
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic)
    throw FormatError("not a checkpoint file");
  bytes.remove_prefix(kCheckpointMagic.size());
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw FormatError("checkpoint header is truncated");
  Checkpoint ck;
  try {
    const auto h = nlohmann::json::parse(bytes.substr(0, nl));
    auto blocks = decode_embeddings(bytes.substr(nl + 1));
    const auto d = h.at("d").get<std::size_t>(), d0 = h.at("d0").get<std::size_t>();
    auto red = blocks.find("reduction");
    auto sc = blocks.find("scorer");
    if (red == blocks.end() || sc == blocks.end()) throw FormatError("missing parameter block");
    if (red->second.tokens() != d || red->second.dim() != d0 || sc->second.tokens() != 1)
      throw FormatError("parameter block shapes disagree with the header");
    ck.config = config_from_json(h.at("config"));
    ck.embedder = h.at("embedder").get<std::string>();
    ck.idf.doc_count = 0;
    if (h.at("idf").at("doc_count").get<std::size_t>() > 0) ck.idf = idf_from_json(h.at("idf"));
    auto& m = ck.model;
    m.reduction.weight = detail::widen(red->second.rows);
    auto scorer = detail::widen(sc->second.rows);
    m.scorer.v.assign(scorer.data().begin(), scorer.data().end());
    m.scorer.c = h.at("scorer_c").get<double>();
    m.scorer.trainable = false;
    m.strategy = parse_strategy(h.at("strategy").get<std::string>());
    m.normalize_tokens = h.at("normalize_tokens").get<bool>();
    m.pg = detail::fusion_from(h.at("pg"), Network::persona);
    m.kg = detail::fusion_from(h.at("kg"), Network::knowledge);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  detail::write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(detail::read_file(path));
}

}  // namespace comac
