// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracles.h"
#include "omnihybrid/sampling.h"
#include "omnihybrid/trainer.h"

namespace omnihybrid {
namespace {

// Scores every response with the same fixed value.
class ConstantJudge : public RewardSource {
 public:
  explicit ConstantJudge(double value) : value_(value) {}
  JudgeScore score(const TokenSequence&, uint64_t) const override { return {value_, value_}; }
  double reward(const JudgeScore& s) const override { return s.semantic; }
  uint64_t seed() const override { return 0; }

 private:
  double value_;
};

// Alternates low and high scores around a centre that climbs with every
// call, so each group's mean, max and spread all rise over a run.
class RisingJudge : public RewardSource {
 public:
  JudgeScore score(const TokenSequence&, uint64_t) const override {
    const double t = static_cast<double>(calls_ / 4);
    const double spread = std::min(0.02 * t, 1.9);
    const double centre = std::min(2.0 + 0.01 * t, 3.0);
    const double v = (calls_++ % 2 == 0) ? centre - spread : centre + spread;
    return {v, v};
  }
  double reward(const JudgeScore& s) const override { return s.semantic; }
  uint64_t seed() const override { return 0; }

 private:
  mutable long calls_ = 0;
};

struct Fixture {
  ModelConfig model;
  std::shared_ptr<const TaskSpec> task;
  TrainContext ctx;

  explicit Fixture(Recipe recipe, int steps = 6) {
    model.hidden = 12;
    model.max_response_length = 12;
    task = std::make_shared<const TaskSpec>(TaskSpec::synthetic(model, TaskConfig{}));
    ctx.task = task;
    ctx.judge = std::make_shared<SyntheticJudge>(task, JudgeConfig{});
    ctx.train.recipe = recipe;
    ctx.train.steps = steps;
    ctx.train.learning_rate = 0.05;
    ctx.train.pretrain_steps = 10;
  }

  PolicyParams base() const {
    return pretrain_base(PolicyParams::initialize(model), *task, 10, 0.05, 0);
  }
};

std::string log_text(const RunResult& r) {
  std::string s;
  for (const auto& rec : r.log) {
    s += rec.prompt_id + ":";
    for (double x : rec.rewards) s += std::to_string(x) + ",";
    for (const auto& [k, v] : rec.losses) s += k + "=" + std::to_string(v) + ",";
    s += std::to_string(rec.grad_norm) + "\n";
  }
  return s;
}

TEST(Recipe, NamesRoundTrip) {
  for (Recipe r : {Recipe::kSftOnly, Recipe::kGrpoFull, Recipe::kGrpoText, Recipe::kDpoFull,
                   Recipe::kDpoText, Recipe::kHybridDynamic, Recipe::kHybridFixed}) {
    EXPECT_EQ(parse_recipe(recipe_name(r)), r);
  }
  EXPECT_THROW(parse_recipe("ppo"), std::invalid_argument);
}

TEST(Step, SftOnlyIsAPlainSftStep) {
  Fixture f(Recipe::kSftOnly);
  const PolicyParams p0 = f.base();
  TrainState state = make_train_state(p0);
  const StepRecord rec = train_step(state, 3, f.ctx);
  EXPECT_FALSE(rec.gate.has_value());
  EXPECT_FALSE(rec.sft_weight.has_value());
  EXPECT_TRUE(rec.rewards.empty());
  const auto g = grad_of_scalar(p0, objective::Sft{f.task->demonstration(3)});
  for (size_t k = 0; k < g.size(); ++k) {
    EXPECT_EQ(state.params.values()[k], p0.values()[k] - 0.05 * g[k]);
  }
  EXPECT_EQ(state.step, 1);
}

TEST(Step, ZeroLearningRateLeavesParams) {
  for (Recipe r : {Recipe::kSftOnly, Recipe::kGrpoFull, Recipe::kHybridDynamic}) {
    Fixture f(r);
    f.ctx.train.learning_rate = 0.0;
    const PolicyParams p0 = f.base();
    TrainState state = make_train_state(p0);
    const StepRecord rec = train_step(state, 0, f.ctx);
    EXPECT_EQ(state.params, p0);
    EXPECT_TRUE(rec.losses.count("total"));
  }
}

TEST(Step, ConstantRewardsCloseTheGate) {
  Fixture f(Recipe::kHybridDynamic);
  f.ctx.judge = std::make_shared<ConstantJudge>(4.0);
  const PolicyParams p0 = f.base();
  TrainState state = make_train_state(p0);
  const StepRecord rec = train_step(state, 2, f.ctx);
  ASSERT_TRUE(rec.gate.has_value());
  EXPECT_EQ(rec.gate->lambda_raw, 0.0);
  EXPECT_EQ(rec.gate->lambda, 0.0);
  EXPECT_EQ(*rec.sft_weight, 1.0);
  // With lambda = 0 the update is exactly the SFT step.
  const auto g = grad_of_scalar(p0, objective::Sft{f.task->demonstration(2)});
  for (size_t k = 0; k < g.size(); ++k) {
    EXPECT_NEAR(state.params.values()[k], p0.values()[k] - 0.05 * g[k], 1e-15);
  }
}

TEST(Step, KlIsZeroAtFirstStep) {
  Fixture f(Recipe::kGrpoFull);
  TrainState state = make_train_state(f.base());
  const StepRecord rec = train_step(state, 1, f.ctx);
  EXPECT_EQ(rec.losses.at("grpo_kl"), 0.0);
}

TEST(Step, NonFiniteRewardAborts) {
  Fixture f(Recipe::kGrpoFull);
  f.ctx.judge = std::make_shared<ConstantJudge>(std::numeric_limits<double>::quiet_NaN());
  TrainState state = make_train_state(f.base());
  try {
    train_step(state, 0, f.ctx);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_EQ(e.record().step, 0);
  }
}

TEST(Loop, ZeroStepsReturnsInitialParams) {
  Fixture f(Recipe::kHybridDynamic, 0);
  const PolicyParams p0 = f.base();
  const RunResult r = train_loop(f.model, f.ctx, {}, p0);
  EXPECT_EQ(r.final_params, p0);
  EXPECT_TRUE(r.log.empty());
}

TEST(Loop, Deterministic) {
  for (Recipe r : {Recipe::kGrpoText, Recipe::kHybridDynamic, Recipe::kDpoFull}) {
    Fixture f(r);
    const RunResult a = train_loop(f.model, f.ctx);
    const RunResult b = train_loop(f.model, f.ctx);
    EXPECT_EQ(log_text(a), log_text(b));
    EXPECT_EQ(a.final_params, b.final_params);
    f.ctx.train.seed = 1;
    EXPECT_NE(log_text(a), log_text(train_loop(f.model, f.ctx)));
  }
}

TEST(Loop, FixedZeroMatchesSftOnly) {
  Fixture sft(Recipe::kSftOnly, 8);
  Fixture fixed(Recipe::kHybridFixed, 8);
  fixed.ctx.train.fixed_lambda = 0.0;
  const RunResult a = train_loop(sft.model, sft.ctx);
  const RunResult b = train_loop(fixed.model, fixed.ctx);
  EXPECT_EQ(a.final_params, b.final_params);
  for (size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].prompt_id, b.log[i].prompt_id);
}

TEST(Loop, AnchorFloorAndGateFields) {
  Fixture f(Recipe::kHybridDynamic, 40);
  f.ctx.train.learning_rate = 0.1;
  const RunResult r = train_loop(f.model, f.ctx);
  ASSERT_EQ(r.lambda_trajectory.size(), 40u);
  for (const auto& rec : r.log) {
    ASSERT_TRUE(rec.gate.has_value());
    EXPECT_GE(*rec.sft_weight, 0.2 - 1e-12);
    EXPECT_EQ(*rec.sft_weight, 1.0 - rec.gate->lambda);
    EXPECT_TRUE(std::isfinite(rec.grad_norm));
  }
  EXPECT_TRUE(r.log.back().eval.has_value());
}

TEST(Loop, LambdaRisesWithMeanReward) {
  Fixture f(Recipe::kHybridDynamic, 100);
  f.ctx.judge = std::make_shared<RisingJudge>();
  const RunResult r = train_loop(f.model, f.ctx);
  ASSERT_EQ(r.lambda_trajectory.size(), 100u);
  double prev_mean = -1.0;
  for (size_t t = 0; t < r.log.size(); ++t) {
    const double m = oracle::mean(r.log[t].rewards);
    EXPECT_GE(m, prev_mean - 1e-12);
    prev_mean = m;
    if (t > 10) EXPECT_GE(r.lambda_trajectory[t], r.lambda_trajectory[t - 1]) << t;
  }
  EXPECT_GT(r.lambda_trajectory.back(), 0.5);
}

TEST(Loop, DpoBuildsPairsOnce) {
  Fixture f(Recipe::kDpoText, 4);
  const RunResult r = train_loop(f.model, f.ctx);
  EXPECT_FALSE(r.pairs.empty());
  for (const auto& p : r.pairs) EXPECT_GE(p.utility_gap, f.ctx.judge_config.margin_delta);
  for (const auto& rec : r.log) EXPECT_TRUE(rec.losses.count("dpo_delta"));
}

TEST(Pairs, AccountingAndMargin) {
  Fixture f(Recipe::kDpoFull);
  const PolicyParams p = f.base();
  PairBuildSummary s;
  const auto pairs = build_pairs(p, *f.task, *f.ctx.judge, f.ctx.judge_config, 8, 0.9, 0.9, 3, &s);
  EXPECT_EQ(s.kept + s.dropped_by_margin + s.skipped, static_cast<int>(f.task->prompts().size()));
  EXPECT_EQ(static_cast<int>(pairs.size()), s.kept);
  JudgeConfig wide = f.ctx.judge_config;
  wide.margin_delta = 4.5;
  PairBuildSummary none;
  EXPECT_TRUE(build_pairs(p, *f.task, *f.ctx.judge, wide, 8, 0.9, 0.9, 3, &none).empty());
  EXPECT_EQ(none.dropped_by_margin, static_cast<int>(f.task->prompts().size()));
  PairBuildSummary one;
  build_pairs(p, *f.task, *f.ctx.judge, f.ctx.judge_config, 1, 0.9, 0.9, 3, &one);
  EXPECT_EQ(one.skipped, static_cast<int>(f.task->prompts().size()));
}

TEST(Eval, OraclePolicyIsPerfect) {
  Fixture f(Recipe::kSftOnly);
  std::vector<TokenSequence> demos;
  for (size_t i = 0; i < f.task->prompts().size(); ++i) demos.push_back(f.task->demonstration(i));
  const EvalMetrics m = evaluate_responses(demos, *f.task, JudgeConfig{});
  EXPECT_EQ(m.mean_semantic, 5.0);
  EXPECT_NEAR(m.speech_style_tv, 0.0, 1e-12);
}

TEST(Eval, UniformPolicyMatchesGreedyTieBreak) {
  Fixture f(Recipe::kSftOnly);
  const PolicyParams p = PolicyParams::initialize(f.model);
  std::vector<size_t> idx = {0, 1, 2};
  std::vector<TokenSequence> expected;
  for (size_t i : idx) {
    TokenSequence s;
    s.prompt = f.task->prompts()[i].prompt;
    for (size_t t = 0; t < 12; ++t) {
      const bool text = f.model.slot_modality(t) == Modality::kText;
      s.response.push_back(text ? 0 : f.model.vocab.speech_token(0));
      s.modality.push_back(text ? Modality::kText : Modality::kSpeech);
    }
    expected.push_back(s);
  }
  const EvalMetrics a = evaluate_policy(p, *f.task, idx, JudgeConfig{});
  const EvalMetrics b = evaluate_responses(expected, *f.task, JudgeConfig{});
  EXPECT_EQ(a.mean_semantic, b.mean_semantic);
  EXPECT_EQ(a.mean_acoustic, b.mean_acoustic);
  EXPECT_EQ(a.speech_style_tv, b.speech_style_tv);
  const EvalMetrics c = evaluate_policy(p, *f.task, idx, JudgeConfig{});
  EXPECT_EQ(a.mean_reward, c.mean_reward);
}

TEST(Config, Validation) {
  TrainConfig c;
  c.top_p = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.group_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.fixed_lambda = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace omnihybrid
