#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "comac/objective.hpp"
#include "comac/random.hpp"

namespace comac::testing {

inline TokenMatrix random_tokens(SplitMix64& rng, const std::string& id, std::size_t tokens,
                                 std::size_t d) {
  TokenMatrix m{id, {}, Matrix<float>(tokens, d)};
  for (std::size_t t = 0; t < tokens; ++t) m.surfaces.push_back("t" + std::to_string(t));
  for (auto& v : m.rows.data()) v = static_cast<float>(uniform(rng, -1, 1));
  return m;
}

/// A round of random token matrices with random TF-IDF weights and labels.
inline RoundInputs random_inputs(SplitMix64& rng, std::size_t d, std::size_t np, std::size_t nk,
                                 std::size_t max_tokens = 5) {
  RoundInputs in;
  in.personas = np;
  in.knowledges = nk;
  for (std::size_t e = 0; e < 1 + np + nk; ++e) {
    const auto s = 1 + uniform_index(rng, max_tokens);
    in.entries.push_back(random_tokens(rng, "e" + std::to_string(e), s, d));
    std::vector<double> w(s);
    for (auto& v : w) v = uniform(rng, 0.5, 3.0);
    in.tfidf.push_back(std::move(w));
  }
  for (std::size_t i = 0; i < np; ++i) in.persona_labels.push_back(uniform01(rng) < 0.4);
  in.knowledge_label = uniform_index(rng, nk);
  return in;
}

inline ModelState random_model(SplitMix64& rng, std::size_t d, std::size_t d0, Strategy strategy,
                               bool normalize) {
  TrainConfig cfg;
  cfg.d0 = d0;
  cfg.strategy = strategy;
  cfg.normalize_tokens = normalize;
  cfg.seed = rng();
  auto m = init_model(d, cfg);
  for (auto& v : m.reduction.weight.data()) v = uniform(rng, -0.6, 0.6);
  for (auto& v : m.scorer.v) v = uniform(rng, -1, 1);
  m.scorer.c = uniform(rng, -0.5, 0.5);
  for (auto* p : {&m.pg, &m.kg}) {
    p->w1 = uniform(rng, -2, 2);
    p->w2 = uniform(rng, -2, 2);
    p->b = uniform(rng, -1, 1);
  }
  return m;
}

/// Flat views of every differentiable parameter in a matching order.
inline std::vector<double*> parameter_slots(ModelState& m) {
  std::vector<double*> out;
  for (auto& v : m.reduction.weight.data()) out.push_back(&v);
  if (m.strategy == Strategy::ff) {
    for (auto& v : m.scorer.v) out.push_back(&v);
    out.push_back(&m.scorer.c);
  }
  for (auto* p : {&m.pg, &m.kg}) {
    out.push_back(&p->w1);
    out.push_back(&p->w2);
    out.push_back(&p->b);
  }
  return out;
}

inline std::vector<double> gradient_values(const ModelState& m, const GradientSet& g) {
  std::vector<double> out(g.reduction.data().begin(), g.reduction.data().end());
  if (m.strategy == Strategy::ff) {
    out.insert(out.end(), g.scorer_v.begin(), g.scorer_v.end());
    out.push_back(g.scorer_c);
  }
  for (const auto* p : {&g.pg, &g.kg}) {
    out.push_back(p->w1);
    out.push_back(p->w2);
    out.push_back(p->b);
  }
  return out;
}

struct GradCheck {
  double max_rel_error = 0.0;
  double min_gap = 0.0;
  std::size_t coordinates = 0;
};

inline constexpr double kFdStep = 1e-5;
inline constexpr double kRelFloor = 1e-6;

/// Central finite differences against the analytic gradient at one point.
inline GradCheck check_gradient(ModelState model, const RoundInputs& in, const TrainConfig& cfg,
                                bool drop) {
  GradCheck out;
  auto g = GradientSet::zeros_like(model);
  out.min_gap = round_objective(model, in, cfg, drop, &g).min_argmax_gap;
  const auto analytic = gradient_values(model, g);
  auto slots = parameter_slots(model);
  out.coordinates = slots.size();
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const double saved = *slots[k];
    *slots[k] = saved + kFdStep;
    const double up = round_objective(model, in, cfg, drop).loss;
    *slots[k] = saved - kFdStep;
    const double down = round_objective(model, in, cfg, drop).loss;
    *slots[k] = saved;
    const double numeric = (up - down) / (2 * kFdStep);
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), kRelFloor});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic[k] - numeric) / denom);
  }
  return out;
}

}  // namespace comac::testing
