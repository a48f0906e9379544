#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "comac/corpus.hpp"
#include "comac/embedding.hpp"
#include "comac/error.hpp"
#include "comac/numeric.hpp"

namespace comac {

// ---------------------------------------------------------------------------
// TF-IDF
// ---------------------------------------------------------------------------

/// Smoothed inverse document frequencies, idf = ln((1+N)/(1+df)) + 1.
struct IdfTable {
  std::size_t doc_count = 0;
  std::map<std::string, double> idf;

  double unseen() const {
    return std::log(static_cast<double>(1 + doc_count)) + 1.0;
  }
  double operator()(const std::string& token) const {
    auto it = idf.find(token);
    return it == idf.end() ? unseen() : it->second;
  }

  friend bool operator==(const IdfTable&, const IdfTable&) = default;
};

inline double smoothed_idf(std::size_t n_docs, std::size_t df) {
  return std::log(static_cast<double>(1 + n_docs) / static_cast<double>(1 + df)) + 1.0;
}

/// Each element of `documents` is one document's token surfaces.
inline IdfTable build_idf(const std::vector<std::vector<std::string>>& documents) {
  if (documents.empty()) throw EmptyCorpus("cannot build IDF from zero documents");
  std::map<std::string, std::size_t> df;
  for (const auto& doc : documents) {
    std::set<std::string> seen(doc.begin(), doc.end());
    for (const auto& t : seen) ++df[t];
  }
  IdfTable table;
  table.doc_count = documents.size();
  for (const auto& [token, count] : df)
    table.idf.emplace(token, smoothed_idf(table.doc_count, count));
  return table;
}

/// Every utterance, persona and knowledge entry counts as one document.
inline IdfTable build_idf(const std::vector<DialogueRound>& corpus) {
  if (corpus.empty()) throw EmptyCorpus("corpus has no rounds");
  std::vector<std::vector<std::string>> docs;
  for (const auto& r : corpus) {
    docs.push_back(surfaces(r.utterance.tokens));
    for (const auto& p : r.personas) docs.push_back(surfaces(p.tokens));
    for (const auto& k : r.knowledges) docs.push_back(surfaces(k.tokens));
  }
  return build_idf(docs);
}

/// Per-position tf * idf, with tf counted inside the entry.
inline std::vector<double> tfidf_weights(const std::vector<std::string>& tokens,
                                         const IdfTable& table) {
  std::unordered_map<std::string, std::size_t> tf;
  for (const auto& t : tokens) ++tf[t];
  std::vector<double> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(static_cast<double>(tf[t]) * table(t));
  return out;
}

inline std::vector<double> tfidf_weights(const TextEntry& entry, const IdfTable& table) {
  return tfidf_weights(surfaces(entry.tokens), table);
}

inline std::string format_sig9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// {"doc_count": N, "idf": {token: value}}, values kept to 9 significant
/// digits.
inline nlohmann::json idf_to_json(const IdfTable& table) {
  nlohmann::json j;
  j["doc_count"] = table.doc_count;
  auto& idf = j["idf"] = nlohmann::json::object();
  for (const auto& [token, value] : table.idf)
    idf[token] = std::stod(format_sig9(value));
  return j;
}

inline IdfTable idf_from_json(const nlohmann::json& j) {
  try {
    IdfTable table;
    table.doc_count = j.at("doc_count").get<std::size_t>();
    for (const auto& [token, value] : j.at("idf").items()) {
      double v = value.get<double>();
      if (!(v > 0.0) || !std::isfinite(v))
        throw SchemaError("idf for '" + token + "' is not a positive finite number");
      table.idf.emplace(token, v);
    }
    if (table.doc_count == 0) throw SchemaError("doc_count is zero");
    return table;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed IDF table: ") + e.what());
  }
}

inline void save_idf(const std::string& path, const IdfTable& table) {
  detail::write_file(path, idf_to_json(table).dump() + "\n");
}

inline IdfTable load_idf(const std::string& path) {
  auto text = detail::read_file(path);
  try {
    return idf_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("IDF file: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Learned feed-forward saliency
// ---------------------------------------------------------------------------

/// weight_i = sigmoid(v . row_i + c)
struct SaliencyScorer {
  std::vector<double> v;
  double c = 0.0;
  bool trainable = true;
};

inline std::vector<double> ff_weights(const ReducedMatrix& m, const SaliencyScorer& scorer) {
  if (m.dim() != scorer.v.size())
    throw ShapeError("saliency scorer width " + std::to_string(scorer.v.size()) +
                     " does not match reduced width " + std::to_string(m.dim()));
  std::vector<double> out;
  out.reserve(m.tokens());
  for (std::size_t t = 0; t < m.tokens(); ++t)
    out.push_back(sigmoid(dot(m.rows.row(t), std::span<const double>(scorer.v)) + scorer.c));
  return out;
}

// ---------------------------------------------------------------------------
// Sparse selection
// ---------------------------------------------------------------------------

struct SelectionMask {
  std::string entry_id;
  std::vector<std::size_t> kept;  // sorted, unique

  static SelectionMask full(std::size_t tokens, std::string id = {}) {
    SelectionMask m{std::move(id), std::vector<std::size_t>(tokens)};
    std::iota(m.kept.begin(), m.kept.end(), std::size_t{0});
    return m;
  }

  friend bool operator==(const SelectionMask&, const SelectionMask&) = default;
};

inline void check_ratio(double p_sr) {
  if (!(p_sr > 0.0 && p_sr <= 1.0))
    throw ConfigError("P_sr must lie in (0, 1], got " + std::to_string(p_sr));
}

/// max(1, round_half_up(p_sr * s))
inline std::size_t selection_size(std::size_t tokens, double p_sr) {
  check_ratio(p_sr);
  auto k = round_half_up(p_sr * static_cast<double>(tokens));
  return static_cast<std::size_t>(std::clamp<long long>(k, 1, static_cast<long long>(tokens)));
}

/// Keeps the k highest-weight positions (earlier position wins ties),
/// returned in position order.
inline SelectionMask select_tokens(const std::vector<double>& weights, double p_sr) {
  check_ratio(p_sr);
  if (weights.empty()) throw EmptyEntry("no token weights to select from");
  const std::size_t k = selection_size(weights.size(), p_sr);
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return {{}, std::move(order)};
}

}  // namespace comac
