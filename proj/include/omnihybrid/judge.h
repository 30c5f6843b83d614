// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic two-axis judge. The semantic axis sees only the text positions
// of a response and the acoustic axis only its speech tokens, mirroring a
// transcript-only / audio-only rubric on a 1-5 scale.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "omnihybrid/model.h"

namespace omnihybrid {

struct TaskConfig {
  int num_prompts = 16;
  int prompt_length = 2;
  int answer_length = 3;
  int style_period = 5;
  uint64_t seed = 7;

  void validate(const ModelConfig& model) const;
};

struct TaskPrompt {
  std::string id;
  std::vector<TokenId> prompt;
  std::vector<TokenId> answer;  // target text tokens
};

// Prompt -> target answer map plus a reference distribution over
// consecutive speech-token pairs (row-major V_S x V_S, sums to 1).
class TaskSpec {
 public:
  TaskSpec(ModelConfig model, std::vector<TaskPrompt> prompts, std::vector<TokenId> style_cycle);

  // Answers are walks through a layered successor map over text tokens, so
  // the previous text token alone determines the next one (and the last
  // layer is followed by EOS). Speech follows a fixed cycle of
  // `style_period` distinct speech tokens.
  static TaskSpec synthetic(const ModelConfig& model, const TaskConfig& cfg);

  const ModelConfig& model() const { return model_; }
  const std::vector<TaskPrompt>& prompts() const { return prompts_; }
  const std::vector<TokenId>& style_cycle() const { return style_cycle_; }
  const std::vector<double>& reference_bigrams() const { return reference_; }

  // Throws std::out_of_range when the prompt has no target.
  const TaskPrompt& lookup(const std::vector<TokenId>& prompt) const;
  size_t index_of(const std::vector<TokenId>& prompt) const;

  // Ground-truth response: the target answer interleaved with speech tokens
  // that follow the reference style cycle, terminated by EOS.
  TokenSequence demonstration(size_t prompt_index) const;

 private:
  ModelConfig model_;
  std::vector<TaskPrompt> prompts_;
  std::vector<TokenId> style_cycle_;
  std::vector<double> reference_;
};

struct JudgeConfig {
  double noise_sigma_semantic = 0.3;
  double noise_sigma_acoustic = 0.8;
  double pair_lambda = 0.5;
  double margin_delta = 0.5;
  uint64_t seed = 11;

  void validate() const;
};

struct JudgeScore {
  double semantic = 1.0;
  double acoustic = 1.0;
};

// Fraction of text positions matching the target, position by position,
// over max(generated, target) text tokens. EOS is not counted.
double semantic_match_fraction(const TokenSequence& seq, const TaskSpec& task);

// Total variation between the empirical distribution of consecutive
// speech-token pairs and the reference; nullopt with fewer than 2 speech
// tokens.
std::optional<double> speech_style_tv(const TokenSequence& seq, const TaskSpec& task);

// 1 + 4 * match + sigma_sem * noise_draw, clamped to [1, 5].
double semantic_score(const TokenSequence& seq, const TaskSpec& task, const JudgeConfig& cfg,
                      double noise_draw);

// 1 + 4 * (1 - TV) + sigma_ac * noise_draw, clamped to [1, 5]. Sequences
// with fewer than 2 speech tokens score 1 and set `*floored`.
double acoustic_score(const TokenSequence& seq, const TaskSpec& task, const JudgeConfig& cfg,
                      double noise_draw, bool* floored = nullptr);

double utility(const JudgeScore& score, const JudgeConfig& cfg);

// Scoring boundary used by the trainer. The synthetic judge is the only
// implementation here; an external scorer plugs in by subclassing.
class RewardSource {
 public:
  virtual ~RewardSource() = default;
  virtual JudgeScore score(const TokenSequence& seq, uint64_t noise_seed) const = 0;
  virtual double reward(const JudgeScore& score) const = 0;
  // Base seed for per-member noise streams.
  virtual uint64_t seed() const = 0;
};

class SyntheticJudge : public RewardSource {
 public:
  SyntheticJudge(std::shared_ptr<const TaskSpec> task, JudgeConfig cfg);

  JudgeScore score(const TokenSequence& seq, uint64_t noise_seed) const override;
  double reward(const JudgeScore& s) const override { return utility(s, cfg_); }
  uint64_t seed() const override { return cfg_.seed; }

  const JudgeConfig& config() const { return cfg_; }
  const TaskSpec& task() const { return *task_; }

 private:
  std::shared_ptr<const TaskSpec> task_;
  JudgeConfig cfg_;
};

struct GroupScores {
  std::vector<JudgeScore> scores;
  std::vector<double> rewards;
};

// Member i draws its noise from stream (source.seed(), stream, i).
GroupScores score_rollout_group(const std::vector<TokenSequence>& members,
                                const RewardSource& source, uint64_t stream);

struct PreferencePair {
  std::vector<TokenId> prompt;
  TokenSequence chosen;
  TokenSequence rejected;
  JudgeScore chosen_score;
  JudgeScore rejected_score;
  double utility_gap = 0.0;
};

// Candidates are ranked by the key (utility, semantic, acoustic, -index):
// chosen is the maximum and rejected the minimum, so ties prefer the higher
// semantic score, then the higher acoustic score, and any remaining tie
// goes to the earlier candidate for chosen, the later one for rejected.
// Returns nullopt when the utility gap is below margin_delta.
// Throws std::invalid_argument with fewer than two candidates.
std::optional<PreferencePair> build_preference_pair(
    const std::vector<std::pair<TokenSequence, JudgeScore>>& candidates, const JudgeConfig& cfg);

// Indices (chosen, rejected) under the same ordering, without the margin.
std::pair<size_t, size_t> select_pair_indices(const std::vector<JudgeScore>& scores,
                                              const JudgeConfig& cfg);

}  // namespace omnihybrid
