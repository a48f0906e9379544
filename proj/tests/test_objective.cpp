#include <cmath>

#include <gtest/gtest.h>

#include "comac/objective.hpp"
#include "support.hpp"

namespace comac {
namespace {

using testing::check_gradient;
using testing::random_inputs;
using testing::random_model;

// Frozen from direct evaluation.
constexpr double kLn3Over2 = 0.40546510810816444;       // -ln(2/3)
constexpr double kWeightedBceCase = 0.05268025782891314;  // w*=0.9, p=(0.9, 0.1), y=(1, 0)

TEST(KnowledgeLoss, Values) {
  EXPECT_NEAR(kg_loss({1.0 / 3, 2.0 / 3}, 1), kLn3Over2, 1e-12);
  EXPECT_DOUBLE_EQ(kg_loss({0.0, 1.0, 0.0}, 1), 0.0);
  EXPECT_THROW(kg_loss({0.5, 0.5}, 2), LabelError);
}

TEST(PersonaLoss, WeightedHandCase) {
  EXPECT_NEAR(weighted_bce({0.9, 0.1}, {true, false}, 0.9), kWeightedBceCase, 1e-12);
  EXPECT_THROW(weighted_bce({0.5}, {true, false}, 0.9), ShapeError);
}

TEST(PersonaLoss, EvenWeightIsHalfOfPlainBce) {
  std::vector<double> p{0.2, 0.7, 0.55};
  std::vector<bool> y{false, true, false};
  double plain = 0;
  for (std::size_t i = 0; i < 3; ++i) plain -= y[i] ? std::log(p[i]) : std::log(1 - p[i]);
  plain /= 3;
  EXPECT_NEAR(weighted_bce(p, y, 0.5), 0.5 * plain, 1e-12);
}

TEST(PersonaLoss, DropOnlyAllNegative) {
  SplitMix64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_FALSE(drop_persona_loss({false, true}, 1.0, rng));
    EXPECT_FALSE(drop_persona_loss({false, false}, 0.0, rng));
  }
  EXPECT_TRUE(drop_persona_loss({false, false}, 1.0, rng));
}

TEST(PersonaLoss, ForcedDraw) {
  // A generator whose first uniform01 draw is 0.05 < p* = 0.1.
  struct Fixed {
    using result_type = std::uint64_t;
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }
    result_type operator()() { return static_cast<result_type>(0.05 * 9007199254740992.0) << 11; }
  } fixed;
  EXPECT_NEAR(uniform01(fixed), 0.05, 1e-15);
  EXPECT_FALSE(pg_loss({0.4, 0.3}, {false, false}, 0.9, 0.1, fixed).has_value());
  auto kept = pg_loss({0.4, 0.3}, {true, false}, 0.9, 0.1, fixed);
  ASSERT_TRUE(kept.has_value());
  EXPECT_NEAR(*kept, weighted_bce({0.4, 0.3}, {true, false}, 0.9), 1e-15);
}

TEST(PersonaLoss, DropFractionMatchesRate) {
  SplitMix64 rng(77);
  int dropped = 0;
  for (int i = 0; i < 10000; ++i) dropped += drop_persona_loss({false, false, false}, 0.1, rng);
  EXPECT_NEAR(dropped / 10000.0, 0.1, 0.01);
}

TEST(TotalLoss, WeightedSumAndLinearity) {
  TrainConfig cfg;
  cfg.alpha = 1, cfg.beta = 1, cfg.gamma = 10;
  LossParts parts{0.25, 0.1, 0.01};
  EXPECT_NEAR(total_loss(parts, cfg), 0.45, 1e-12);
  parts.persona.reset();
  EXPECT_NEAR(total_loss(parts, cfg), 0.35, 1e-12);
  LossParts a{0.3, 0.2, 0.1}, b{0.7, 0.4, 0.05};
  LossParts sum{1.0, 0.6, 0.15};
  EXPECT_NEAR(total_loss(a, cfg) + total_loss(b, cfg), total_loss(sum, cfg), 1e-12);
}

class GradientFixture : public ::testing::TestWithParam<std::tuple<Strategy, bool, bool>> {};

TEST_P(GradientFixture, MatchesFiniteDifferences) {
  const auto [strategy, normalize, drop] = GetParam();
  SplitMix64 rng(mix_seed(static_cast<std::uint64_t>(strategy), normalize * 2 + drop));
  TrainConfig cfg;
  cfg.strategy = strategy;
  cfg.normalize_tokens = normalize;
  cfg.p_sr = 0.6;
  int checked = 0;
  for (int attempt = 0; attempt < 40 && checked < 6; ++attempt) {
    auto in = random_inputs(rng, 8, 2 + uniform_index(rng, 2), 2 + uniform_index(rng, 2));
    if (drop) std::fill(in.persona_labels.begin(), in.persona_labels.end(), false);
    auto model = random_model(rng, 8, 4, strategy, normalize);
    auto r = check_gradient(model, in, cfg, drop);
    if (r.min_gap < 1e-3) continue;
    ++checked;
    EXPECT_LE(r.max_rel_error, 1e-4);
  }
  EXPECT_EQ(checked, 6);
}

INSTANTIATE_TEST_SUITE_P(
    AllVariants, GradientFixture,
    ::testing::Combine(::testing::Values(Strategy::tfidf, Strategy::ff), ::testing::Bool(),
                       ::testing::Bool()));

TEST(Gradient, DeadPersonaBranchWhenDropped) {
  SplitMix64 rng(5);
  auto in = random_inputs(rng, 8, 3, 3);
  std::fill(in.persona_labels.begin(), in.persona_labels.end(), false);
  auto model = random_model(rng, 8, 4, Strategy::tfidf, true);
  TrainConfig cfg;
  cfg.gamma = 0;
  auto g = GradientSet::zeros_like(model);
  round_objective(model, in, cfg, true, &g);
  EXPECT_EQ(g.pg.w1, 0.0);
  EXPECT_EQ(g.pg.w2, 0.0);
  EXPECT_EQ(g.pg.b, 0.0);

  // The remaining gradient is alpha times the knowledge-only gradient.
  TrainConfig unit = cfg;
  unit.alpha = 1.0;
  cfg.alpha = 2.5;
  auto g1 = GradientSet::zeros_like(model), g2 = GradientSet::zeros_like(model);
  round_objective(model, in, unit, true, &g1);
  round_objective(model, in, cfg, true, &g2);
  EXPECT_NEAR(g2.kg.w1, 2.5 * g1.kg.w1, 1e-12);
  EXPECT_NEAR(g2.kg.b, 2.5 * g1.kg.b, 1e-12);
  for (std::size_t i = 0; i < g1.reduction.data().size(); ++i)
    EXPECT_NEAR(g2.reduction.data()[i], 2.5 * g1.reduction.data()[i], 1e-12);
}

TEST(Gradient, LanguageHookAddsValueNotGradient) {
  SplitMix64 rng(6);
  auto round = make_round("d", 0, {"a b"}, {"c", "d e"}, {"f", "g h"}, {true, false}, 1, "x");
  auto in = prepare_round(round, Embedder::hashed(8), nullptr);
  auto model = random_model(rng, 8, 4, Strategy::ff, true);
  TrainConfig cfg;
  cfg.strategy = Strategy::ff;
  std::string seen;
  LmLossHook hook = [&](const std::string& prompt, const DialogueRound& r) {
    seen = prompt;
    EXPECT_EQ(r.response, "x");
    return 0.2;
  };
  auto g0 = GradientSet::zeros_like(model), g1 = GradientSet::zeros_like(model);
  auto plain = round_objective(model, in, cfg, false, &g0);
  auto hooked = round_objective(model, in, cfg, false, &g1, hook);
  EXPECT_NEAR(hooked.loss - plain.loss, cfg.gamma * 0.2, 1e-12);
  EXPECT_NEAR(hooked.parts.language, 0.2, 0);
  EXPECT_FALSE(seen.empty());
  EXPECT_EQ(g0.reduction, g1.reduction);
}

TEST(Sgd, ZeroLearningRateIsIdentity) {
  SplitMix64 rng(7);
  auto in = random_inputs(rng, 8, 2, 3);
  auto model = random_model(rng, 8, 4, Strategy::ff, true);
  auto copy = model;
  TrainConfig cfg;
  cfg.strategy = Strategy::ff;
  auto g = gradients(model, std::span(&in, 1), cfg);
  sgd_step(model, g, 0.0);
  EXPECT_EQ(model.reduction.weight, copy.reduction.weight);
  EXPECT_EQ(model.scorer.v, copy.scorer.v);
  EXPECT_EQ(model.pg, copy.pg);
  EXPECT_EQ(model.kg, copy.kg);
  sgd_step(model, g, 0.1);
  EXPECT_NE(model.reduction.weight, copy.reduction.weight);
}

TEST(Sgd, TfidfLeavesScorerFrozen) {
  SplitMix64 rng(8);
  auto in = random_inputs(rng, 8, 2, 3);
  auto model = random_model(rng, 8, 4, Strategy::tfidf, true);
  auto v = model.scorer.v;
  auto g = gradients(model, std::span(&in, 1), TrainConfig{});
  sgd_step(model, g, 0.5);
  EXPECT_EQ(model.scorer.v, v);
}

std::vector<RoundInputs> small_corpus(std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<RoundInputs> out;
  for (int i = 0; i < 8; ++i) out.push_back(random_inputs(rng, 8, 3, 4));
  return out;
}

TEST(Train, ZeroEpochsReturnsInitialState) {
  TrainConfig cfg;
  cfg.epochs = 0;
  auto m = train(small_corpus(1), 8, cfg);
  auto init = init_model(8, cfg);
  EXPECT_EQ(m.reduction.weight, init.reduction.weight);
  EXPECT_EQ(m.pg, init.pg);
}

TEST(Train, DeterministicForFixedSeed) {
  const auto corpus = small_corpus(2);
  TrainConfig cfg;
  cfg.strategy = Strategy::ff;
  std::vector<double> losses;
  auto a = train(corpus, 8, cfg, {}, [&](const TrainProgress& p) { losses.push_back(p.mean_loss); });
  auto b = train(corpus, 8, cfg);
  EXPECT_EQ(a.reduction.weight, b.reduction.weight);
  EXPECT_EQ(a.scorer.v, b.scorer.v);
  EXPECT_EQ(a.kg, b.kg);
  EXPECT_EQ(losses.size(), cfg.epochs);
  cfg.seed = 8;
  auto c = train(corpus, 8, cfg);
  EXPECT_NE(a.reduction.weight, c.reduction.weight);
}

TEST(Train, EmptyCorpusRejected) {
  EXPECT_THROW(train({}, 8, TrainConfig{}), EmptyCorpus);
}

}  // namespace
}  // namespace comac
