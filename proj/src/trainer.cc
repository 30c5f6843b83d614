// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

#include "omnihybrid/trainer.h"

#include <cmath>
#include <stdexcept>

#include "omnihybrid/rng.h"
#include "omnihybrid/sampling.h"

namespace omnihybrid {

namespace {

constexpr struct {
  Recipe recipe;
  const char* name;
} kRecipeNames[] = {
    {Recipe::kSftOnly, "sft_only"},         {Recipe::kGrpoFull, "grpo_full"},
    {Recipe::kGrpoText, "grpo_text"},       {Recipe::kDpoFull, "dpo_full"},
    {Recipe::kDpoText, "dpo_text"},         {Recipe::kHybridDynamic, "hybrid_dynamic"},
    {Recipe::kHybridFixed, "hybrid_fixed"},
};

bool needs_rollouts(Recipe r) {
  return r == Recipe::kGrpoFull || r == Recipe::kGrpoText || r == Recipe::kHybridDynamic ||
         r == Recipe::kHybridFixed;
}

bool is_dpo(Recipe r) { return r == Recipe::kDpoFull || r == Recipe::kDpoText; }

double l2(const std::vector<double>& g) {
  double s = 0.0;
  for (double x : g) s += x * x;
  return std::sqrt(s);
}

// Stream tags for derive_seed.
constexpr uint64_t kPromptStream = 1;
constexpr uint64_t kRolloutStream = 2;
constexpr uint64_t kPairStream = 3;
constexpr uint64_t kPretrainStream = 4;

}  // namespace

const char* recipe_name(Recipe r) {
  for (const auto& e : kRecipeNames) {
    if (e.recipe == r) return e.name;
  }
  return "unknown";
}

Recipe parse_recipe(const std::string& name) {
  for (const auto& e : kRecipeNames) {
    if (name == e.name) return e.recipe;
  }
  throw std::invalid_argument("unknown recipe '" + name + "'");
}

void TrainConfig::validate() const {
  if (steps < 0) throw std::invalid_argument("train.steps must be >= 0");
  if (group_size < 1) throw std::invalid_argument("train.group_size must be >= 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("train.temperature must be > 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("train.top_p must be in (0, 1]");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("train.learning_rate must be >= 0");
  if (refresh_interval < 1) throw std::invalid_argument("train.refresh_interval must be >= 1");
  if (eval_interval < 0) throw std::invalid_argument("train.eval_interval must be >= 0");
  if (!(fixed_lambda >= 0.0 && fixed_lambda <= 1.0)) {
    throw std::invalid_argument("train.fixed_lambda must be in [0, 1]");
  }
  if (pretrain_steps < 0) throw std::invalid_argument("train.pretrain_steps must be >= 0");
  if (pair_samples < 2) throw std::invalid_argument("train.pair_samples must be >= 2");
}

EvalMetrics evaluate_responses(const std::vector<TokenSequence>& responses,
                               const TaskSpec& task, const JudgeConfig& judge) {
  EvalMetrics m;
  if (responses.empty()) return m;
  for (const auto& r : responses) {
    const JudgeScore s{semantic_score(r, task, judge, 0.0), acoustic_score(r, task, judge, 0.0)};
    m.mean_semantic += s.semantic;
    m.mean_acoustic += s.acoustic;
    m.mean_reward += utility(s, judge);
    m.speech_style_tv += speech_style_tv(r, task).value_or(1.0);
  }
  const double n = static_cast<double>(responses.size());
  m.mean_semantic /= n;
  m.mean_acoustic /= n;
  m.mean_reward /= n;
  m.speech_style_tv /= n;
  return m;
}

EvalMetrics evaluate_policy(const PolicyParams& params, const TaskSpec& task,
                            const std::vector<size_t>& prompt_indices, const JudgeConfig& judge) {
  std::vector<TokenSequence> responses;
  responses.reserve(prompt_indices.size());
  for (size_t i : prompt_indices) {
    responses.push_back(greedy_decode(params, task.prompts().at(i).prompt));
  }
  return evaluate_responses(responses, task, judge);
}

TrainState make_train_state(PolicyParams initial) {
  ReferenceSnapshot snap(initial);
  return TrainState{std::move(initial), snap, snap, GateState{}, 0};
}

StepRecord train_step(TrainState& state, size_t prompt_index, const TrainContext& ctx) {
  const TrainConfig& cfg = ctx.train;
  const TaskSpec& task = *ctx.task;
  const uint64_t step = static_cast<uint64_t>(state.step);
  StepRecord rec;
  rec.step = state.step;
  rec.prompt_id = task.prompts().at(prompt_index).id;

  if (state.step % cfg.refresh_interval == 0) state.behavior = ReferenceSnapshot(state.params);

  const TokenSequence demo = task.demonstration(prompt_index);
  RolloutGroup group;
  if (needs_rollouts(cfg.recipe)) {
    group.prompt = demo.prompt;
    group.members = sample_group(state.behavior.params(), group.prompt, cfg.group_size,
                                 cfg.temperature, cfg.top_p,
                                 derive_seed(cfg.seed, {kRolloutStream, step}));
    group.rewards = score_rollout_group(group.members, *ctx.judge, step).rewards;
    group.behavior = state.behavior;
    rec.rewards = group.rewards;
  }

  Objective obj = objective::Constant{};
  switch (cfg.recipe) {
    case Recipe::kSftOnly:
      obj = objective::Sft{demo};
      break;
    case Recipe::kGrpoFull:
    case Recipe::kGrpoText: {
      const MaskRule rule = cfg.recipe == Recipe::kGrpoFull ? MaskRule::kAll : MaskRule::kTextOnly;
      const GrpoBreakdown b = grpo_breakdown(state.params, group, state.reference, ctx.grpo, rule);
      rec.losses["grpo_surrogate"] = b.surrogate;
      rec.losses["grpo_kl"] = b.kl;
      obj = objective::Grpo{group, state.reference, ctx.grpo, rule};
      break;
    }
    case Recipe::kHybridDynamic:
    case Recipe::kHybridFixed: {
      double lambda = cfg.fixed_lambda;
      if (cfg.recipe == Recipe::kHybridDynamic) {
        const GateStepResult g = gate_step(state.gate, group.rewards, ctx.gate);
        state.gate = g.state;
        lambda = g.lambda;
        rec.gate = GateLog{g.diagnostics.normalized_variance, g.diagnostics.direction_gate,
                           g.diagnostics.lambda_raw, g.diagnostics.lambda};
      }
      rec.sft_weight = 1.0 - lambda;
      const HybridBreakdown b =
          hybrid_breakdown(state.params, demo, group, state.reference, ctx.grpo, lambda);
      rec.losses["sft"] = b.sft;
      rec.losses["grpo"] = b.grpo;
      obj = objective::Hybrid{demo, group, state.reference, ctx.grpo, lambda};
      break;
    }
    case Recipe::kDpoFull:
    case Recipe::kDpoText:
      if (!ctx.pairs.empty()) {
        // The pair for this prompt when one was kept, otherwise cycle through the pool.
        const PreferencePair* pick = &ctx.pairs[prompt_index % ctx.pairs.size()];
        for (const auto& candidate : ctx.pairs) {
          if (candidate.prompt == demo.prompt) pick = &candidate;
        }
        const auto& p = *pick;
        const MaskRule rule = cfg.recipe == Recipe::kDpoFull ? MaskRule::kAll : MaskRule::kTextOnly;
        PreferenceTriple triple{p.chosen, p.rejected};
        rec.losses["dpo_delta"] = dpo_delta(state.params, state.reference, triple, rule);
        obj = objective::Dpo{std::move(triple), state.reference, ctx.dpo, rule};
      }
      break;
  }

  const SplitGrad g = split_grad_of_scalar(state.params, obj);
  rec.losses["total"] = g.value;
  rec.grad_norm = l2(g.total);
  rec.grad_norm_text = l2(g.text);
  rec.grad_norm_speech = l2(g.speech);
  if (!std::isfinite(g.value) || !std::isfinite(rec.grad_norm)) {
    throw NonFiniteError("non-finite loss or gradient at step " + std::to_string(state.step),
                         rec);
  }
  if (cfg.learning_rate != 0.0) {
    auto values = state.params.values();
    for (size_t i = 0; i < values.size(); ++i) values[i] -= cfg.learning_rate * g.total[i];
  }
  ++state.step;
  return rec;
}

std::vector<PreferencePair> build_pairs(const PolicyParams& params, const TaskSpec& task,
                                        const RewardSource& judge, const JudgeConfig& judge_cfg,
                                        int samples, double temperature, double top_p,
                                        uint64_t seed, PairBuildSummary* summary) {
  PairBuildSummary s;
  std::vector<PreferencePair> pairs;
  for (size_t i = 0; i < task.prompts().size(); ++i) {
    const auto& prompt = task.prompts()[i].prompt;
    std::vector<TokenSequence> cands;
    if (samples >= 1) {
      cands = sample_group(params, prompt, samples, temperature, top_p,
                           derive_seed(seed, {kPairStream, i}));
    }
    if (cands.size() < 2) {
      ++s.skipped;
      continue;
    }
    const GroupScores scored = score_rollout_group(cands, judge, derive_seed(seed, {kPairStream, i, 1}));
    std::vector<std::pair<TokenSequence, JudgeScore>> scored_cands;
    for (size_t k = 0; k < cands.size(); ++k) scored_cands.emplace_back(cands[k], scored.scores[k]);
    if (auto pair = build_preference_pair(scored_cands, judge_cfg)) {
      pairs.push_back(std::move(*pair));
      ++s.kept;
    } else {
      ++s.dropped_by_margin;
    }
  }
  if (summary) *summary = s;
  return pairs;
}

PolicyParams pretrain_base(PolicyParams params, const TaskSpec& task, int steps,
                           double learning_rate, uint64_t seed) {
  const size_t n = task.prompts().size();
  for (int s = 0; s < steps; ++s) {
    Rng rng(derive_seed(seed, {kPretrainStream, static_cast<uint64_t>(s)}));
    const size_t i = static_cast<size_t>(rng() % n);
    const size_t donor = static_cast<size_t>(rng() % n);
    TokenSequence demo = task.demonstration(donor);
    demo.prompt = task.prompts()[i].prompt;

    const auto g = grad_of_scalar(params, objective::Sft{demo});
    auto values = params.values();
    for (size_t k = 0; k < values.size(); ++k) values[k] -= learning_rate * g[k];
  }
  return params;
}

RunResult train_loop(const ModelConfig& model, TrainContext ctx,
                     const std::function<void(const StepRecord&)>& on_step,
                     std::optional<PolicyParams> initial) {
  ctx.train.validate();
  ctx.grpo.validate();
  ctx.dpo.validate();
  ctx.gate.validate();
  ctx.judge_config.validate();
  const TaskSpec& task = *ctx.task;
  const TrainConfig& cfg = ctx.train;

  PolicyParams base = initial ? std::move(*initial)
                              : pretrain_base(PolicyParams::initialize(model), task,
                                              cfg.pretrain_steps, cfg.pretrain_learning_rate,
                                              cfg.seed);
  RunResult result{base, base, {}, {}, {}, {}};
  if (is_dpo(cfg.recipe)) {
    ctx.pairs = build_pairs(base, task, *ctx.judge, ctx.judge_config, cfg.pair_samples,
                            cfg.temperature, cfg.top_p, cfg.seed);
    result.pairs = ctx.pairs;
  }

  std::vector<size_t> all(task.prompts().size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;

  TrainState state = make_train_state(std::move(base));
  for (int s = 0; s < cfg.steps; ++s) {
    Rng rng(derive_seed(cfg.seed, {kPromptStream, static_cast<uint64_t>(s)}));
    const size_t prompt = static_cast<size_t>(rng() % all.size());
    StepRecord rec = train_step(state, prompt, ctx);
    const bool last = s + 1 == cfg.steps;
    if (last || (cfg.eval_interval > 0 && (s + 1) % cfg.eval_interval == 0)) {
      rec.eval = evaluate_policy(state.params, task, all, ctx.judge_config);
    }
    if (rec.gate) result.lambda_trajectory.push_back(rec.gate->lambda);
    if (on_step) on_step(rec);
    result.log.push_back(std::move(rec));
  }
  result.final_eval = evaluate_policy(state.params, task, all, ctx.judge_config);
  result.final_params = std::move(state.params);
  return result;
}

}  // namespace omnihybrid
