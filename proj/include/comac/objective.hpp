#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "comac/config.hpp"
#include "comac/error.hpp"
#include "comac/latesim.hpp"
#include "comac/model.hpp"
#include "comac/numeric.hpp"
#include "comac/random.hpp"

namespace comac {

// ---------------------------------------------------------------------------
// Loss terms
// ---------------------------------------------------------------------------

/// Cross-entropy of the knowledge distribution at the gold index.
inline double kg_loss(const std::vector<double>& dist, std::size_t label) {
  if (label >= dist.size())
    throw LabelError("knowledge label " + std::to_string(label) + " out of range for " +
                     std::to_string(dist.size()) + " candidates");
  return -std::log(dist[label]);
}

/// True when the persona term of an all-negative example is discarded.
/// Draws from `rng` only for all-negative examples.
template <typename Urbg>
bool drop_persona_loss(const std::vector<bool>& labels, double p_star, Urbg& rng) {
  for (bool y : labels)
    if (y) return false;
  return uniform01(rng) < p_star;
}

/// Mean class-weighted binary cross-entropy: positives weighted by w_star,
/// negatives by 1 - w_star.
inline double weighted_bce(const std::vector<double>& probs, const std::vector<bool>& labels,
                           double w_star) {
  if (probs.size() != labels.size())
    throw ShapeError("persona probabilities and labels differ in length");
  if (probs.empty()) throw ShapeError("no persona entries");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    sum -= labels[i] ? w_star * std::log(probs[i]) : (1.0 - w_star) * std::log(1.0 - probs[i]);
  return sum / static_cast<double>(probs.size());
}

/// Persona loss with imbalance handling; empty when the term is dropped.
template <typename Urbg>
std::optional<double> pg_loss(const std::vector<double>& probs, const std::vector<bool>& labels,
                              double w_star, double p_star, Urbg& rng) {
  if (probs.size() != labels.size())
    throw ShapeError("persona probabilities and labels differ in length");
  if (drop_persona_loss(labels, p_star, rng)) return std::nullopt;
  return weighted_bce(probs, labels, w_star);
}

struct LossParts {
  double knowledge = 0.0;
  std::optional<double> persona;
  double language = 0.0;
};

inline double total_loss(const LossParts& parts, const TrainConfig& cfg) {
  return cfg.alpha * parts.knowledge + cfg.beta * parts.persona.value_or(0.0) +
         cfg.gamma * parts.language;
}

/// Language-model loss on the grounded prompt. The engine does not train a
/// generator, so the hook only contributes a value, never a gradient.
using LmLossHook = std::function<double(const std::string& prompt, const DialogueRound& round)>;

inline double zero_lm_loss(const std::string&, const DialogueRound&) { return 0.0; }

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

struct GradientSet {
  Matrix<double> reduction;
  std::vector<double> scorer_v;
  double scorer_c = 0.0;
  FusionParams pg{0, 0, 0, Network::persona};
  FusionParams kg{0, 0, 0, Network::knowledge};

  static GradientSet zeros_like(const ModelState& m) {
    GradientSet g;
    g.reduction = Matrix<double>(m.input_dim(), m.reduced_dim());
    g.scorer_v.assign(m.scorer.v.size(), 0.0);
    return g;
  }

  GradientSet& operator+=(const GradientSet& o) {
    for (std::size_t i = 0; i < reduction.data().size(); ++i)
      reduction.data()[i] += o.reduction.data()[i];
    for (std::size_t i = 0; i < scorer_v.size(); ++i) scorer_v[i] += o.scorer_v[i];
    scorer_c += o.scorer_c;
    pg.w1 += o.pg.w1, pg.w2 += o.pg.w2, pg.b += o.pg.b;
    kg.w1 += o.kg.w1, kg.w2 += o.kg.w2, kg.b += o.kg.b;
    return *this;
  }

  GradientSet& operator*=(double s) {
    for (auto& v : reduction.data()) v *= s;
    for (auto& v : scorer_v) v *= s;
    scorer_c *= s;
    pg.w1 *= s, pg.w2 *= s, pg.b *= s;
    kg.w1 *= s, kg.w2 *= s, kg.b *= s;
    return *this;
  }

  bool finite() const {
    auto ok = [](double v) { return std::isfinite(v); };
    for (double v : reduction.data())
      if (!ok(v)) return false;
    for (double v : scorer_v)
      if (!ok(v)) return false;
    return ok(scorer_c) && ok(pg.w1) && ok(pg.w2) && ok(pg.b) && ok(kg.w1) && ok(kg.w2) &&
           ok(kg.b);
  }
};

struct RoundObjective {
  double loss = 0.0;
  LossParts parts;
  /// Smallest best-vs-second-best gap over every max reduction evaluated.
  double min_argmax_gap = std::numeric_limits<double>::infinity();
};

namespace detail {

/// Rows of one entry as seen by the similarity kernel during training.
struct TrainingEntry {
  Matrix<double> projected;          // x W, all tokens
  std::vector<double> norms;         // per-token L2 norm of projected rows
  Matrix<double> unit;               // rows after optional normalization
  std::vector<std::size_t> positions;  // token index of each kernel row
  std::vector<double> gates;         // soft saliency per kernel row (1 for TF-IDF)
  Matrix<double> kernel;             // rows fed to the similarity
  Matrix<double> kernel_grad;        // d loss / d kernel
};

inline TrainingEntry make_training_entry(const ModelState& model, const TokenMatrix& tokens,
                                         const std::vector<double>* tfidf, double p_sr) {
  TrainingEntry e;
  auto proj = reduce(tokens, model.reduction, false);
  e.projected = std::move(proj.rows);
  const std::size_t s = e.projected.rows(), d0 = e.projected.cols();
  e.unit = e.projected;
  e.norms.assign(s, 1.0);
  if (model.normalize_tokens) {
    for (std::size_t t = 0; t < s; ++t) {
      auto r = e.unit.row(t);
      const double n = std::sqrt(dot(std::span<const double>(r), std::span<const double>(r)));
      if (!(n > 0.0)) throw DegenerateRow("token " + std::to_string(t) + " of '" +
                                          tokens.entry_id + "' projects to a zero vector");
      e.norms[t] = n;
      for (auto& v : r) v /= n;
    }
  }
  if (model.strategy == Strategy::tfidf) {
    if (!tfidf) throw ConfigError("TF-IDF strategy requires an IDF table");
    e.positions = select_tokens(*tfidf, p_sr).kept;
    e.gates.assign(e.positions.size(), 1.0);
  } else {
    // Soft selection: every token, scaled by its saliency.
    e.positions.resize(s);
    std::iota(e.positions.begin(), e.positions.end(), std::size_t{0});
    e.gates.resize(s);
    for (std::size_t t = 0; t < s; ++t)
      e.gates[t] = sigmoid(dot(e.unit.row(t), std::span<const double>(model.scorer.v)) +
                           model.scorer.c);
  }
  e.kernel = Matrix<double>(e.positions.size(), d0);
  for (std::size_t k = 0; k < e.positions.size(); ++k) {
    auto src = e.unit.row(e.positions[k]);
    auto dst = e.kernel.row(k);
    for (std::size_t c = 0; c < d0; ++c) dst[c] = e.gates[k] * src[c];
  }
  e.kernel_grad = Matrix<double>(e.kernel.rows(), d0);
  return e;
}

/// One direction of the normalized similarity, keeping argmax routing.
struct Direction {
  std::vector<MaxMatch> matches;
  double value = 0.0;
};

inline Direction directional(const Matrix<double>& x, const Matrix<double>& y) {
  Direction d;
  d.matches = max_matches(x, y);
  for (const auto& m : d.matches) d.value += m.value;
  d.value /= static_cast<double>(x.rows());
  return d;
}

struct PairTrace {
  Direction forward, backward;
  double value() const { return forward.value + backward.value; }
};

inline PairTrace trace_pair(const TrainingEntry& a, const TrainingEntry& b, double& min_gap) {
  PairTrace p{directional(a.kernel, b.kernel), directional(b.kernel, a.kernel)};
  for (const auto* dir : {&p.forward, &p.backward})
    for (const auto& m : dir->matches) min_gap = std::min(min_gap, m.runner_up_gap);
  return p;
}

inline void backprop_direction(const Direction& dir, double grad, TrainingEntry& x,
                               TrainingEntry& y) {
  const double scale = grad / static_cast<double>(x.kernel.rows());
  for (std::size_t i = 0; i < dir.matches.size(); ++i) {
    const std::size_t j = dir.matches[i].index;
    auto xi = x.kernel.row(i);
    auto yj = y.kernel.row(j);
    auto gxi = x.kernel_grad.row(i);
    auto gyj = y.kernel_grad.row(j);
    for (std::size_t c = 0; c < xi.size(); ++c) {
      gxi[c] += scale * yj[c];
      gyj[c] += scale * xi[c];
    }
  }
}

inline void backprop_pair(const PairTrace& p, double grad, TrainingEntry& a, TrainingEntry& b) {
  if (grad == 0.0) return;
  backprop_direction(p.forward, grad, a, b);
  backprop_direction(p.backward, grad, b, a);
}

/// Kernel-row gradients back through gating, normalization and projection.
inline void backprop_entry(const ModelState& model, const TokenMatrix& tokens,
                           const TrainingEntry& e, GradientSet& g) {
  const std::size_t d0 = e.kernel.cols();
  Matrix<double> unit_grad(e.unit.rows(), d0);
  for (std::size_t k = 0; k < e.positions.size(); ++k) {
    const std::size_t t = e.positions[k];
    auto gk = e.kernel_grad.row(k);
    auto ut = e.unit.row(t);
    auto gu = unit_grad.row(t);
    const double gate = e.gates[k];
    for (std::size_t c = 0; c < d0; ++c) gu[c] += gate * gk[c];
    if (model.strategy == Strategy::ff) {
      const double d_gate = dot(std::span<const double>(gk), ut);
      const double d_logit = d_gate * gate * (1.0 - gate);
      for (std::size_t c = 0; c < d0; ++c) {
        g.scorer_v[c] += d_logit * ut[c];
        gu[c] += d_logit * model.scorer.v[c];
      }
      g.scorer_c += d_logit;
    }
  }
  std::vector<double> dz(d0);
  for (std::size_t t = 0; t < e.unit.rows(); ++t) {
    auto gu = unit_grad.row(t);
    auto ut = e.unit.row(t);
    if (model.normalize_tokens) {
      const double proj = dot(std::span<const double>(gu), ut);
      for (std::size_t c = 0; c < d0; ++c) dz[c] = (gu[c] - ut[c] * proj) / e.norms[t];
    } else {
      std::copy(gu.begin(), gu.end(), dz.begin());
    }
    auto x = tokens.rows.row(t);
    for (std::size_t r = 0; r < x.size(); ++r) {
      const double xr = x[r];
      if (xr == 0.0) continue;
      auto gw = g.reduction.row(r);
      for (std::size_t c = 0; c < d0; ++c) gw[c] += xr * dz[c];
    }
  }
}

inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace detail

/// Training-mode objective for one round; accumulates into `grad` when
/// non-null. The FF strategy uses soft saliency gates here, TF-IDF uses its
/// hard (constant) top-k mask.
inline RoundObjective round_objective(const ModelState& model, const RoundInputs& in,
                                      const TrainConfig& cfg, bool drop_persona,
                                      GradientSet* grad = nullptr,
                                      const LmLossHook& lm_hook = {}) {
  using namespace detail;
  const std::size_t np = in.personas, nk = in.knowledges;
  if (np == 0 || nk == 0) throw ShapeError("round needs personas and knowledges");
  if (in.persona_labels.size() != np) throw ShapeError("persona label count mismatch");
  if (in.knowledge_label >= nk) throw LabelError("knowledge label out of range");

  RoundObjective out;
  std::vector<TrainingEntry> entries;
  entries.reserve(in.entries.size());
  for (std::size_t e = 0; e < in.entries.size(); ++e)
    entries.push_back(make_training_entry(model, in.entries[e],
                                          in.tfidf.empty() ? nullptr : &in.tfidf[e], cfg.p_sr));

  auto& u = entries[0];
  auto persona = [&](std::size_t i) -> TrainingEntry& { return entries[in.persona_index(i)]; };
  auto knowledge = [&](std::size_t j) -> TrainingEntry& { return entries[in.knowledge_index(j)]; };

  std::vector<PairTrace> pu, ku, pk;  // pk row-major N_p x N_k
  for (std::size_t i = 0; i < np; ++i) pu.push_back(trace_pair(persona(i), u, out.min_argmax_gap));
  for (std::size_t j = 0; j < nk; ++j) ku.push_back(trace_pair(knowledge(j), u, out.min_argmax_gap));
  for (std::size_t i = 0; i < np; ++i)
    for (std::size_t j = 0; j < nk; ++j)
      pk.push_back(trace_pair(persona(i), knowledge(j), out.min_argmax_gap));

  std::vector<double> spk(np, 0.0), skp(nk, 0.0);
  for (std::size_t i = 0; i < np; ++i)
    for (std::size_t j = 0; j < nk; ++j) spk[i] += pk[i * nk + j].value();
  for (std::size_t j = 0; j < nk; ++j)
    for (std::size_t i = 0; i < np; ++i) skp[j] += pk[i * nk + j].value();
  for (auto& v : spk) v /= static_cast<double>(nk);
  for (auto& v : skp) v /= static_cast<double>(np);

  std::vector<double> zp(np), zk(nk);
  for (std::size_t i = 0; i < np; ++i)
    zp[i] = model.pg.w1 * spk[i] + model.pg.w2 * pu[i].value() + model.pg.b;
  for (std::size_t j = 0; j < nk; ++j)
    zk[j] = model.kg.w1 * skp[j] + model.kg.w2 * ku[j].value() + model.kg.b;

  // Knowledge: -log softmax(zk)[label] = logsumexp(zk) - zk[label].
  const auto kdist = softmax(zk);
  const double zmax = *std::max_element(zk.begin(), zk.end());
  double lse = 0.0;
  for (double z : zk) lse += std::exp(z - zmax);
  out.parts.knowledge = zmax + std::log(lse) - zk[in.knowledge_label];

  // Persona: weighted BCE in logit form.
  std::vector<double> pprob(np);
  for (std::size_t i = 0; i < np; ++i) pprob[i] = sigmoid(zp[i]);
  if (!drop_persona) {
    double sum = 0.0;
    for (std::size_t i = 0; i < np; ++i)
      sum += in.persona_labels[i] ? cfg.w_star * softplus(-zp[i])
                                  : (1.0 - cfg.w_star) * softplus(zp[i]);
    out.parts.persona = sum / static_cast<double>(np);
  }

  if (lm_hook && in.source) {
    GroundingResult hard;
    hard.persona_probs = pprob;
    for (double p : pprob) hard.persona_mask.push_back(p > 0.5);
    hard.knowledge_dist = kdist;
    hard.knowledge_pick = argmax(kdist);
    out.parts.language = lm_hook(assemble_prompt(*in.source, hard, " "), *in.source);
  }
  out.loss = total_loss(out.parts, cfg);
  if (!std::isfinite(out.loss)) throw NumericsError("non-finite loss");
  if (!grad) return out;

  std::vector<double> dzk(nk), dzp(np, 0.0);
  for (std::size_t j = 0; j < nk; ++j)
    dzk[j] = cfg.alpha * (kdist[j] - (j == in.knowledge_label ? 1.0 : 0.0));
  if (!drop_persona) {
    const double scale = cfg.beta / static_cast<double>(np);
    for (std::size_t i = 0; i < np; ++i)
      dzp[i] = scale * (in.persona_labels[i] ? cfg.w_star * (pprob[i] - 1.0)
                                             : (1.0 - cfg.w_star) * pprob[i]);
  }

  GradientSet& g = *grad;
  for (std::size_t i = 0; i < np; ++i) {
    g.pg.w1 += dzp[i] * spk[i];
    g.pg.w2 += dzp[i] * pu[i].value();
    g.pg.b += dzp[i];
  }
  for (std::size_t j = 0; j < nk; ++j) {
    g.kg.w1 += dzk[j] * skp[j];
    g.kg.w2 += dzk[j] * ku[j].value();
    g.kg.b += dzk[j];
  }

  for (std::size_t i = 0; i < np; ++i) backprop_pair(pu[i], dzp[i] * model.pg.w2, persona(i), u);
  for (std::size_t j = 0; j < nk; ++j) backprop_pair(ku[j], dzk[j] * model.kg.w2, knowledge(j), u);
  for (std::size_t i = 0; i < np; ++i)
    for (std::size_t j = 0; j < nk; ++j) {
      const double gs = dzp[i] * model.pg.w1 / static_cast<double>(nk) +
                        dzk[j] * model.kg.w1 / static_cast<double>(np);
      backprop_pair(pk[i * nk + j], gs, persona(i), knowledge(j));
    }
  for (std::size_t e = 0; e < entries.size(); ++e)
    backprop_entry(model, in.entries[e], entries[e], g);
  return out;
}

/// Drop decision for one example in one epoch, derived from the run seed.
inline bool epoch_drop_decision(const RoundInputs& in, const TrainConfig& cfg, std::size_t epoch,
                                std::size_t example) {
  SplitMix64 rng(mix_seed(mix_seed(cfg.seed ^ 0x44524F50ULL, epoch), example));
  return drop_persona_loss(in.persona_labels, cfg.p_star, rng);
}

/// Mean gradient of the objective over a batch. Per-item gradients are
/// summed in batch order.
inline GradientSet gradients(const ModelState& model, std::span<const RoundInputs> batch,
                             const TrainConfig& cfg, std::span<const bool> drops = {},
                             double* loss = nullptr, const LmLossHook& lm_hook = {}) {
  if (batch.empty()) throw ShapeError("gradient batch is empty");
  std::vector<GradientSet> parts(batch.size(), GradientSet::zeros_like(model));
  std::vector<double> losses(batch.size());
  parallel_for(batch.size(), [&](std::size_t b) {
    const bool drop = drops.empty() ? false : drops[b];
    losses[b] = round_objective(model, batch[b], cfg, drop, &parts[b], lm_hook).loss;
  });
  GradientSet g = GradientSet::zeros_like(model);
  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    g += parts[b];
    total += losses[b];
  }
  g *= 1.0 / static_cast<double>(batch.size());
  if (!g.finite()) throw NumericsError("non-finite gradient");
  if (loss) *loss = total / static_cast<double>(batch.size());
  return g;
}

/// params -= lr * grad for every trainable parameter.
inline void sgd_step(ModelState& model, const GradientSet& g, double lr) {
  if (model.reduction.trainable)
    for (std::size_t i = 0; i < g.reduction.data().size(); ++i)
      model.reduction.weight.data()[i] -= lr * g.reduction.data()[i];
  if (model.strategy == Strategy::ff && model.scorer.trainable) {
    for (std::size_t i = 0; i < g.scorer_v.size(); ++i) model.scorer.v[i] -= lr * g.scorer_v[i];
    model.scorer.c -= lr * g.scorer_c;
  }
  model.pg.w1 -= lr * g.pg.w1, model.pg.w2 -= lr * g.pg.w2, model.pg.b -= lr * g.pg.b;
  model.kg.w1 -= lr * g.kg.w1, model.kg.w2 -= lr * g.kg.w2, model.kg.b -= lr * g.kg.b;
}

struct TrainProgress {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
};

/// Plain SGD, one round per step, a seeded shuffle per epoch.
inline ModelState train(const std::vector<RoundInputs>& rounds, std::size_t d,
                        const TrainConfig& cfg, const LmLossHook& lm_hook = {},
                        const std::function<void(const TrainProgress&)>& on_epoch = {}) {
  cfg.validate();
  ModelState model = init_model(d, cfg);
  if (cfg.epochs > 0 && rounds.empty()) throw EmptyCorpus("no training rounds");
  std::vector<std::size_t> order(rounds.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 rng(mix_seed(cfg.seed ^ 0x53485546ULL, epoch));
    shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      const bool drop = epoch_drop_decision(rounds[idx], cfg, epoch, idx);
      double loss = 0.0;
      const bool drops[1] = {drop};
      auto g = gradients(model, std::span(&rounds[idx], 1), cfg, drops, &loss, lm_hook);
      sgd_step(model, g, cfg.learning_rate);
      loss_sum += loss;
    }
    if (on_epoch) on_epoch({epoch, loss_sum / static_cast<double>(rounds.size())});
  }
  return model;
}

}  // namespace comac
