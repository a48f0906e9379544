#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "comac/config.hpp"
#include "comac/corpus.hpp"
#include "comac/embedding.hpp"
#include "comac/grounding.hpp"
#include "comac/latesim.hpp"
#include "comac/saliency.hpp"

namespace comac {

/// Source of token matrices: either the built-in hash embedder or a table
/// of imported matrices keyed by entry id.
class Embedder {
 public:
  static Embedder hashed(std::size_t d) {
    if (d < 4) throw ConfigError("embedding dimension must be >= 4");
    Embedder e;
    e.dim_ = d;
    return e;
  }

  static Embedder imported(std::map<std::string, TokenMatrix> table) {
    if (table.empty()) throw FormatError("embedding table is empty");
    Embedder e;
    e.dim_ = table.begin()->second.dim();
    e.table_ = std::make_shared<const std::map<std::string, TokenMatrix>>(std::move(table));
    return e;
  }

  bool is_hashed() const { return table_ == nullptr; }
  std::size_t dim() const { return dim_; }

  TokenMatrix embed(const TextEntry& entry) const {
    if (!table_) return hash_embed(entry, dim_);
    auto it = table_->find(entry.id);
    if (it == table_->end())
      throw MissingEntry("no embedding for entry '" + entry.id + "'");
    return it->second;
  }

 private:
  std::size_t dim_ = 0;
  std::shared_ptr<const std::map<std::string, TokenMatrix>> table_;
};

/// One round's frozen inputs. Entries are ordered utterance, personas,
/// knowledges. `source` is non-owning and may be null.
struct RoundInputs {
  std::vector<TokenMatrix> entries;
  std::vector<std::vector<double>> tfidf;  // per entry; empty when no IDF given
  std::size_t personas = 0;
  std::size_t knowledges = 0;
  std::vector<bool> persona_labels;
  std::size_t knowledge_label = 0;
  const DialogueRound* source = nullptr;

  static constexpr std::size_t utterance_index() { return 0; }
  std::size_t persona_index(std::size_t i) const { return 1 + i; }
  std::size_t knowledge_index(std::size_t j) const { return 1 + personas + j; }
};

/// TF-IDF weights come from the token matrix's own surfaces, so imported
/// embeddings with their own tokenization are weighted consistently.
inline RoundInputs prepare_round(const DialogueRound& round, const Embedder& embedder,
                                 const IdfTable* idf) {
  RoundInputs in;
  in.personas = round.persona_count();
  in.knowledges = round.knowledge_count();
  in.persona_labels = round.persona_labels;
  in.knowledge_label = round.knowledge_label;
  in.source = &round;
  in.entries.push_back(embedder.embed(round.utterance));
  for (const auto& p : round.personas) in.entries.push_back(embedder.embed(p));
  for (const auto& k : round.knowledges) in.entries.push_back(embedder.embed(k));
  for (const auto& e : in.entries) {
    if (e.dim() != embedder.dim())
      throw ShapeError("entry '" + e.entry_id + "' has width " + std::to_string(e.dim()));
    if (idf) in.tfidf.push_back(tfidf_weights(e.surfaces, *idf));
  }
  return in;
}

inline std::vector<RoundInputs> prepare_rounds(const std::vector<DialogueRound>& rounds,
                                               const Embedder& embedder, const IdfTable* idf) {
  std::vector<RoundInputs> out;
  out.reserve(rounds.size());
  for (const auto& r : rounds) out.push_back(prepare_round(r, embedder, idf));
  return out;
}

/// Everything trainable outside the (frozen) encoder.
struct ModelState {
  ReductionLayer reduction;
  SaliencyScorer scorer;  // used by Strategy::ff only
  FusionParams pg{0, 0, 0, Network::persona};
  FusionParams kg{0, 0, 0, Network::knowledge};
  Strategy strategy = Strategy::tfidf;
  bool normalize_tokens = true;

  std::size_t input_dim() const { return reduction.input_dim(); }
  std::size_t reduced_dim() const { return reduction.output_dim(); }
};

/// Seeded reduction weights; fusion parameters start at zero so an
/// untrained model is indifferent between candidates.
inline ModelState init_model(std::size_t d, const TrainConfig& cfg) {
  cfg.validate();
  ModelState m;
  m.reduction = make_reduction_layer(d, cfg.d0, cfg.seed);
  m.strategy = cfg.strategy;
  m.normalize_tokens = cfg.normalize_tokens;
  const std::size_t d0 = m.reduced_dim();
  m.scorer.v.assign(d0, 0.0);
  SplitMix64 rng(mix_seed(cfg.seed, 0x5343'4F52ULL));
  const double bound = 1.0 / std::sqrt(static_cast<double>(d0));
  for (auto& v : m.scorer.v) v = uniform(rng, -bound, bound);
  m.scorer.trainable = cfg.strategy == Strategy::ff;
  return m;
}

/// Per-entry selection at inference: top-k by TF-IDF or by the learned
/// saliency scorer.
inline std::vector<SelectionMask> inference_masks(const ModelState& model,
                                                  const RoundInputs& in,
                                                  const std::vector<ReducedMatrix>& reduced,
                                                  double p_sr) {
  std::vector<SelectionMask> masks;
  masks.reserve(reduced.size());
  for (std::size_t e = 0; e < reduced.size(); ++e) {
    std::vector<double> w;
    if (model.strategy == Strategy::tfidf) {
      if (in.tfidf.size() != reduced.size())
        throw ConfigError("TF-IDF strategy requires an IDF table");
      w = in.tfidf[e];
    } else {
      w = ff_weights(reduced[e], model.scorer);
    }
    auto m = select_tokens(w, p_sr);
    m.entry_id = reduced[e].entry_id;
    masks.push_back(std::move(m));
  }
  return masks;
}

struct RelevanceScores {
  RelevanceVector pu, pk, ku, kp;
};

/// Similarity matrices between the round's sources, reduced to the four
/// relevance vectors the grounding heads consume.
inline RelevanceScores relevance(const ModelState& model, const RoundInputs& in, double p_sr) {
  std::vector<ReducedMatrix> reduced;
  reduced.reserve(in.entries.size());
  for (const auto& e : in.entries)
    reduced.push_back(reduce(e, model.reduction, model.normalize_tokens));
  const auto masks = inference_masks(model, in, reduced, p_sr);

  const std::span<const ReducedMatrix> all(reduced);
  const std::span<const SelectionMask> all_masks(masks);
  const auto u = all.subspan(0, 1), p = all.subspan(1, in.personas),
             k = all.subspan(1 + in.personas, in.knowledges);
  const auto mu = all_masks.subspan(0, 1), mp = all_masks.subspan(1, in.personas),
             mk = all_masks.subspan(1 + in.personas, in.knowledges);

  const auto pu = sim_matrix(p, u, mp, mu);
  const auto pk = sim_matrix(p, k, mp, mk);
  const auto ku = sim_matrix(k, u, mk, mu);
  RelevanceScores out;
  out.pu = mean_over_docs(pu);
  out.ku = mean_over_docs(ku);
  out.pk = mean_over_docs(pk);
  out.kp = mean_over_docs(pk.transposed());  // symmetric similarity
  return out;
}

inline GroundingResult ground(const ModelState& model, const RoundInputs& in, double p_sr) {
  const auto rel = relevance(model, in, p_sr);
  return combine(pg_forward(rel.pk, rel.pu, model.pg), kg_forward(rel.kp, rel.ku, model.kg));
}

}  // namespace comac
