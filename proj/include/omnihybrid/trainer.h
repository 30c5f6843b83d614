// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

// Single-stage post-training loop: sample a group from pi_old, score it,
// gate lambda, take one plain gradient step on the recipe's loss, log.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "omnihybrid/gate.h"
#include "omnihybrid/judge.h"
#include "omnihybrid/model.h"
#include "omnihybrid/objectives.h"

namespace omnihybrid {

enum class Recipe {
  kSftOnly,
  kGrpoFull,
  kGrpoText,
  kDpoFull,
  kDpoText,
  kHybridDynamic,
  kHybridFixed,
};

const char* recipe_name(Recipe r);
// Accepts the names produced by recipe_name ("sft_only", "hybrid_dynamic", ...).
Recipe parse_recipe(const std::string& name);

struct TrainConfig {
  Recipe recipe = Recipe::kHybridDynamic;
  double fixed_lambda = 0.5;  // HYBRID_FIXED only
  int steps = 500;
  int group_size = 4;
  double temperature = 0.9;
  double top_p = 0.9;
  double learning_rate = 1e-6;
  uint64_t seed = 0;
  int refresh_interval = 1;  // pi_old refresh cadence in steps
  int eval_interval = 0;     // 0: evaluate only after the last step
  // Base-model construction: SFT on fluent responses whose text answers a
  // randomly chosen other prompt (style right, content unaligned).
  int pretrain_steps = 150;
  double pretrain_learning_rate = 0.05;
  int pair_samples = 8;  // DPO recipes: candidates per prompt

  void validate() const;
};

struct EvalMetrics {
  double mean_reward = 0.0;
  double mean_semantic = 0.0;
  double mean_acoustic = 0.0;
  double speech_style_tv = 0.0;
};

// Noise-free scoring of fixed responses; responses with fewer than two
// speech tokens count as TV = 1.
EvalMetrics evaluate_responses(const std::vector<TokenSequence>& responses,
                               const TaskSpec& task, const JudgeConfig& judge);

// Greedy-decodes every listed prompt and scores it with sigma = 0.
EvalMetrics evaluate_policy(const PolicyParams& params, const TaskSpec& task,
                            const std::vector<size_t>& prompt_indices, const JudgeConfig& judge);

struct GateLog {
  double normalized_variance = 0.0;
  double direction_gate = 0.0;
  double lambda_raw = 0.0;
  double lambda = 0.0;
};

struct StepRecord {
  long step = 0;
  std::string prompt_id;
  std::vector<double> rewards;
  std::optional<GateLog> gate;          // dynamic recipe only
  std::optional<double> sft_weight;     // hybrid recipes
  std::map<std::string, double> losses; // component name -> value
  double grad_norm_text = 0.0;
  double grad_norm_speech = 0.0;
  double grad_norm = 0.0;
  std::optional<EvalMetrics> eval;
};

struct TrainState {
  PolicyParams params;
  ReferenceSnapshot reference;  // pi_ref, frozen
  ReferenceSnapshot behavior;   // pi_old
  GateState gate;
  long step = 0;
};

struct TrainContext {
  std::shared_ptr<const TaskSpec> task;
  std::shared_ptr<const RewardSource> judge;
  JudgeConfig judge_config;
  GRPOConfig grpo;
  DPOConfig dpo;
  GateConfig gate;
  TrainConfig train;
  std::vector<PreferencePair> pairs;  // DPO recipes
};

// Thrown when a loss or gradient turns non-finite; carries the offending
// record.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, StepRecord record)
      : std::runtime_error(what), record_(std::move(record)) {}
  const StepRecord& record() const { return record_; }

 private:
  StepRecord record_;
};

TrainState make_train_state(PolicyParams initial);

// One update on `prompt_index`; advances state.step.
StepRecord train_step(TrainState& state, size_t prompt_index, const TrainContext& ctx);

// Samples `samples` candidates per prompt from `params`, scores them and
// keeps at most one pair per prompt.
struct PairBuildSummary {
  int kept = 0;
  int dropped_by_margin = 0;
  int skipped = 0;
};
std::vector<PreferencePair> build_pairs(const PolicyParams& params, const TaskSpec& task,
                                        const RewardSource& judge, const JudgeConfig& judge_cfg,
                                        int samples, double temperature, double top_p,
                                        uint64_t seed, PairBuildSummary* summary = nullptr);

// SFT on fluent-but-unaligned responses; see TrainConfig::pretrain_steps.
PolicyParams pretrain_base(PolicyParams params, const TaskSpec& task, int steps,
                           double learning_rate, uint64_t seed);

struct RunResult {
  PolicyParams base;
  PolicyParams final_params;
  std::vector<StepRecord> log;
  std::vector<double> lambda_trajectory;  // dynamic recipe only
  std::vector<PreferencePair> pairs;
  EvalMetrics final_eval;
};

// Full run. Deterministic given the configs. `on_step` (optional) sees each
// record as it is produced.
// Starts from `initial` when given, otherwise from a fresh initialization
// followed by base pretraining.
RunResult train_loop(const ModelConfig& model, TrainContext ctx,
                     const std::function<void(const StepRecord&)>& on_step = {},
                     std::optional<PolicyParams> initial = std::nullopt);

}  // namespace omnihybrid
