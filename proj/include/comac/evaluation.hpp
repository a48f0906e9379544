#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "comac/config.hpp"
#include "comac/error.hpp"
#include "comac/metrics.hpp"
#include "comac/model.hpp"
#include "comac/objective.hpp"

namespace comac {


inline std::vector<GroundingResult> predict(const ModelState& model,
                                            const std::vector<RoundInputs>& rounds, double p_sr) {
  std::vector<GroundingResult> out;
  out.reserve(rounds.size());
  for (const auto& r : rounds) out.push_back(ground(model, r, p_sr));
  return out;
}

/// Grounding metrics of `model` over prepared rounds.
inline EvalReport evaluate(const ModelState& model, const std::vector<RoundInputs>& rounds,
                           double p_sr) {
  if (rounds.empty()) throw EmptyEval("no evaluation rounds");
  std::vector<std::vector<bool>> pred_masks, label_masks;
  std::vector<std::size_t> picks, gold;
  for (const auto& r : rounds) {
    auto g = ground(model, r, p_sr);
    pred_masks.push_back(std::move(g.persona_mask));
    label_masks.push_back(r.persona_labels);
    picks.push_back(g.knowledge_pick);
    gold.push_back(r.knowledge_label);
  }
  EvalReport rep;
  rep.pg = pg_metrics(pred_masks, label_masks);
  rep.kg_accuracy = kg_accuracy(picks, gold);
  return rep;
}

// ---------------------------------------------------------------------------
// Ablation sweeps
// ---------------------------------------------------------------------------

struct LossWeights {
  double alpha = 1, beta = 1, gamma = 10;
};

/// Cells are every loss-weight triple crossed with every P_sr value, in
/// listed order.
struct SweepSpec {
  std::vector<LossWeights> weights;
  std::vector<double> p_sr;
  bool constrain_sum = false;  // require alpha + beta + gamma == 10

  void validate() const {
    if (weights.empty() || p_sr.empty()) throw ConfigError("sweep grid is empty");
    for (double p : p_sr) check_ratio(p);
    if (!constrain_sum) return;
    for (const auto& w : weights) {
      const double s = w.alpha + w.beta + w.gamma;
      if (std::abs(s - 10.0) > 1e-9) {
        std::ostringstream msg;
        msg << "loss weights " << w.alpha << '/' << w.beta << '/' << w.gamma << " sum to " << s
            << ", expected 10";
        throw ConfigError(msg.str());
      }
    }
  }
};

struct SweepRow {
  TrainConfig config;
  EvalReport report;
};

inline std::vector<SweepRow> run_sweep(const SweepSpec& spec, const TrainConfig& base,
                                       const std::vector<RoundInputs>& train_rounds,
                                       const std::vector<RoundInputs>& eval_rounds,
                                       std::size_t d) {
  spec.validate();
  std::vector<SweepRow> rows;
  for (const auto& w : spec.weights)
    for (double p : spec.p_sr) {
      TrainConfig cfg = base;
      cfg.alpha = w.alpha, cfg.beta = w.beta, cfg.gamma = w.gamma, cfg.p_sr = p;
      auto model = train(train_rounds, d, cfg);
      rows.push_back({cfg, evaluate(model, eval_rounds, cfg.p_sr)});
    }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "alpha,beta,gamma,P_sr," << csv_header() << '\n';
  for (const auto& r : rows)
    out << detail::format_double(r.config.alpha) << ',' << detail::format_double(r.config.beta)
        << ',' << detail::format_double(r.config.gamma) << ','
        << detail::format_double(r.config.p_sr) << ',' << csv_fields(r.report) << '\n';
  return out.str();
}

}  // namespace comac
