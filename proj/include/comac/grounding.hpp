#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "comac/corpus.hpp"
#include "comac/error.hpp"
#include "comac/latesim.hpp"
#include "comac/numeric.hpp"

namespace comac {

enum class Network { persona, knowledge };

/// fused = w1 * (relevance to the other auxiliary source)
///       + w2 * (relevance to the utterance) + b
struct FusionParams {
  double w1 = 0.0;
  double w2 = 0.0;
  double b = 0.0;
  Network network = Network::persona;

  friend bool operator==(const FusionParams&, const FusionParams&) = default;
};

struct GroundingResult {
  std::vector<double> persona_probs;
  std::vector<bool> persona_mask;
  std::vector<double> knowledge_dist;
  std::size_t knowledge_pick = 0;
};

namespace detail {

inline std::vector<double> fuse(const RelevanceVector& aux, const RelevanceVector& utt,
                                const FusionParams& p) {
  if (aux.size() != utt.size())
    throw ShapeError("relevance vectors differ in length: " + std::to_string(aux.size()) +
                     " vs " + std::to_string(utt.size()));
  std::vector<double> z(aux.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = p.w1 * aux[i] + p.w2 * utt[i] + p.b;
  return z;
}

}  // namespace detail

struct PersonaGrounding {
  std::vector<double> probs;
  std::vector<bool> selected;
};

/// Sigmoid fusion; an entry is selected when its probability is strictly
/// above 0.5.
inline PersonaGrounding pg_forward(const RelevanceVector& pk_rel, const RelevanceVector& pu_rel,
                                   const FusionParams& params) {
  auto z = detail::fuse(pk_rel, pu_rel, params);
  PersonaGrounding out;
  for (double v : z) {
    const double p = sigmoid(v);
    out.probs.push_back(p);
    out.selected.push_back(p > 0.5);
  }
  return out;
}

struct KnowledgeGrounding {
  std::vector<double> dist;
  std::size_t pick = 0;
};

/// Softmax fusion; the pick is the lowest index attaining the maximum.
inline KnowledgeGrounding kg_forward(const RelevanceVector& kp_rel, const RelevanceVector& ku_rel,
                                     const FusionParams& params) {
  auto z = detail::fuse(kp_rel, ku_rel, params);
  if (z.empty()) throw ShapeError("no knowledge candidates");
  KnowledgeGrounding out;
  out.dist = softmax(z);
  out.pick = argmax(out.dist);
  return out;
}

inline GroundingResult combine(PersonaGrounding pg, KnowledgeGrounding kg) {
  return {std::move(pg.probs), std::move(pg.selected), std::move(kg.dist), kg.pick};
}

/// [selected knowledge; selected personas in order; utterance]
inline std::string assemble_prompt(const DialogueRound& round, const GroundingResult& result,
                                   const std::string& sep) {
  if (result.persona_mask.size() != round.persona_count() ||
      result.knowledge_pick >= round.knowledge_count())
    throw ShapeError("grounding result does not match the round's entry counts");
  std::string out = round.knowledges[result.knowledge_pick].text;
  for (std::size_t i = 0; i < round.persona_count(); ++i)
    if (result.persona_mask[i]) out += sep + round.personas[i].text;
  out += sep + round.utterance.text;
  return out;
}

inline nlohmann::json grounding_record(const DialogueRound& round, const GroundingResult& result,
                                       const std::string& prompt) {
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < result.persona_mask.size(); ++i)
    if (result.persona_mask[i]) selected.push_back(i);
  nlohmann::json j;
  j["dialog_id"] = round.dialog_id;
  j["round"] = round.round;
  j["persona_probs"] = result.persona_probs;
  j["persona_selected"] = selected;
  j["knowledge_dist"] = result.knowledge_dist;
  j["knowledge_selected"] = result.knowledge_pick;
  j["prompt"] = prompt;
  return j;
}

}  // namespace comac
