// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

#include "omnihybrid/judge.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <tuple>

#include "omnihybrid/rng.h"

namespace omnihybrid {

void TaskConfig::validate(const ModelConfig& model) const {
  if (num_prompts < 1) throw std::invalid_argument("task.num_prompts must be >= 1");
  if (prompt_length < 1) throw std::invalid_argument("task.prompt_length must be >= 1");
  if (answer_length < 1) throw std::invalid_argument("task.answer_length must be >= 1");
  if (answer_length > model.vocab.text_size) {
    throw std::invalid_argument("task.answer_length cannot exceed model.text_size");
  }
  if (style_period < 2 || style_period > model.vocab.speech_size) {
    throw std::invalid_argument("task.style_period must be in [2, model.speech_size]");
  }
  double combos = std::pow(static_cast<double>(model.vocab.text_size), prompt_length);
  if (combos < num_prompts) throw std::invalid_argument("task.num_prompts exceeds distinct prompts");
}

TaskSpec::TaskSpec(ModelConfig model, std::vector<TaskPrompt> prompts,
                   std::vector<TokenId> style_cycle)
    : model_(std::move(model)), prompts_(std::move(prompts)), style_cycle_(std::move(style_cycle)) {
  const Vocabulary& vocab = model_.vocab;
  for (const auto& p : prompts_) {
    if (p.answer.empty()) throw std::invalid_argument("task: prompt " + p.id + " has empty answer");
    for (TokenId t : p.answer) {
      if (!vocab.is_text(t)) throw std::invalid_argument("task: answer tokens must be text tokens");
    }
  }
  if (style_cycle_.size() < 2) throw std::invalid_argument("task: style cycle needs >= 2 tokens");
  const size_t vs = static_cast<size_t>(vocab.speech_size);
  reference_.assign(vs * vs, 0.0);
  for (size_t i = 0; i < style_cycle_.size(); ++i) {
    const TokenId a = style_cycle_[i];
    const TokenId b = style_cycle_[(i + 1) % style_cycle_.size()];
    if (!vocab.is_speech(a)) throw std::invalid_argument("task: style cycle must be speech tokens");
    reference_[static_cast<size_t>(a - vocab.text_size) * vs +
               static_cast<size_t>(b - vocab.text_size)] += 1.0 / static_cast<double>(style_cycle_.size());
  }
}

TaskSpec TaskSpec::synthetic(const ModelConfig& model, const TaskConfig& cfg) {
  model.validate();
  cfg.validate(model);
  const Vocabulary& vocab = model.vocab;
  Rng rng(derive_seed(cfg.seed, {0x7a5c}));
  auto below = [&](size_t n) { return static_cast<size_t>(uniform01(rng) * static_cast<double>(n)); };

  std::vector<TokenId> text(static_cast<size_t>(vocab.text_size));
  std::iota(text.begin(), text.end(), 0);
  std::shuffle(text.begin(), text.end(), rng);
  // Split the shuffled text tokens into answer_length layers.
  const size_t layers = static_cast<size_t>(cfg.answer_length);
  std::vector<std::vector<TokenId>> layer(layers);
  for (size_t i = 0; i < text.size(); ++i) layer[i * layers / text.size()].push_back(text[i]);
  std::vector<TokenId> succ(static_cast<size_t>(vocab.text_size), -1);
  for (size_t l = 0; l + 1 < layers; ++l) {
    for (TokenId t : layer[l]) succ[static_cast<size_t>(t)] = layer[l + 1][below(layer[l + 1].size())];
  }

  std::set<std::vector<TokenId>> seen;
  std::vector<TaskPrompt> prompts;
  while (static_cast<int>(prompts.size()) < cfg.num_prompts) {
    std::vector<TokenId> q(static_cast<size_t>(cfg.prompt_length));
    for (auto& t : q) t = static_cast<TokenId>(below(static_cast<size_t>(vocab.text_size)));
    if (!seen.insert(q).second) continue;
    TaskPrompt p;
    p.id = "p" + std::to_string(prompts.size());
    p.prompt = q;
    TokenId cur = layer[0][below(layer[0].size())];
    for (size_t l = 0; l < layers; ++l) {
      p.answer.push_back(cur);
      if (l + 1 < layers) cur = succ[static_cast<size_t>(cur)];
    }
    prompts.push_back(std::move(p));
  }

  std::vector<TokenId> speech(static_cast<size_t>(vocab.speech_size));
  for (size_t k = 0; k < speech.size(); ++k) speech[k] = vocab.speech_token(static_cast<int>(k));
  std::shuffle(speech.begin(), speech.end(), rng);
  speech.resize(static_cast<size_t>(cfg.style_period));
  return TaskSpec(model, std::move(prompts), std::move(speech));
}

size_t TaskSpec::index_of(const std::vector<TokenId>& prompt) const {
  for (size_t i = 0; i < prompts_.size(); ++i) {
    if (prompts_[i].prompt == prompt) return i;
  }
  throw std::out_of_range("task: no target answer for prompt");
}

const TaskPrompt& TaskSpec::lookup(const std::vector<TokenId>& prompt) const {
  return prompts_[index_of(prompt)];
}

TokenSequence TaskSpec::demonstration(size_t prompt_index) const {
  const TaskPrompt& p = prompts_.at(prompt_index);
  TokenSequence seq;
  seq.prompt = p.prompt;
  size_t next_text = 0;
  size_t next_speech = 0;
  for (size_t pos = 0; pos < static_cast<size_t>(model_.max_response_length); ++pos) {
    const Modality m = model_.slot_modality(pos);
    if (m == Modality::kText) {
      if (next_text == p.answer.size()) {
        seq.response.push_back(model_.vocab.eos());
        seq.modality.push_back(m);
        return seq;
      }
      seq.response.push_back(p.answer[next_text++]);
    } else {
      seq.response.push_back(style_cycle_[next_speech++ % style_cycle_.size()]);
    }
    seq.modality.push_back(m);
  }
  seq.truncated = true;
  return seq;
}

void JudgeConfig::validate() const {
  if (!(noise_sigma_semantic >= 0.0)) throw std::invalid_argument("judge.noise_sigma_semantic must be >= 0");
  if (!(noise_sigma_acoustic >= 0.0)) throw std::invalid_argument("judge.noise_sigma_acoustic must be >= 0");
  if (!(pair_lambda >= 0.0 && pair_lambda <= 1.0)) {
    throw std::invalid_argument("judge.pair_lambda must be in [0, 1]");
  }
  if (!(margin_delta >= 0.0)) throw std::invalid_argument("judge.margin_delta must be >= 0");
}

double semantic_match_fraction(const TokenSequence& seq, const TaskSpec& task) {
  const TaskPrompt& target = task.lookup(seq.prompt);
  const Vocabulary& vocab = task.model().vocab;
  size_t n = 0;
  size_t matches = 0;
  for (size_t t = 0; t < seq.length(); ++t) {
    if (seq.modality[t] != Modality::kText || vocab.is_special(seq.response[t])) continue;
    if (n < target.answer.size() && seq.response[t] == target.answer[n]) ++matches;
    ++n;
  }
  return static_cast<double>(matches) /
         static_cast<double>(std::max(n, target.answer.size()));
}

std::optional<double> speech_style_tv(const TokenSequence& seq, const TaskSpec& task) {
  const Vocabulary& vocab = task.model().vocab;
  std::vector<size_t> speech;
  for (size_t t = 0; t < seq.length(); ++t) {
    if (vocab.is_speech(seq.response[t])) {
      speech.push_back(static_cast<size_t>(seq.response[t] - vocab.text_size));
    }
  }
  if (speech.size() < 2) return std::nullopt;
  const size_t vs = static_cast<size_t>(vocab.speech_size);
  std::vector<double> emp(vs * vs, 0.0);
  const double w = 1.0 / static_cast<double>(speech.size() - 1);
  for (size_t i = 0; i + 1 < speech.size(); ++i) emp[speech[i] * vs + speech[i + 1]] += w;
  const auto& ref = task.reference_bigrams();
  double tv = 0.0;
  for (size_t k = 0; k < emp.size(); ++k) tv += std::abs(emp[k] - ref[k]);
  return std::min(1.0, 0.5 * tv);
}

double semantic_score(const TokenSequence& seq, const TaskSpec& task, const JudgeConfig& cfg,
                      double noise_draw) {
  const double s = 1.0 + 4.0 * semantic_match_fraction(seq, task) +
                   cfg.noise_sigma_semantic * noise_draw;
  return std::clamp(s, 1.0, 5.0);
}

double acoustic_score(const TokenSequence& seq, const TaskSpec& task, const JudgeConfig& cfg,
                      double noise_draw, bool* floored) {
  const auto tv = speech_style_tv(seq, task);
  if (floored) *floored = !tv.has_value();
  if (!tv) return 1.0;
  const double s = 1.0 + 4.0 * (1.0 - *tv) + cfg.noise_sigma_acoustic * noise_draw;
  return std::clamp(s, 1.0, 5.0);
}

double utility(const JudgeScore& score, const JudgeConfig& cfg) {
  return cfg.pair_lambda * score.semantic + (1.0 - cfg.pair_lambda) * score.acoustic;
}

SyntheticJudge::SyntheticJudge(std::shared_ptr<const TaskSpec> task, JudgeConfig cfg)
    : task_(std::move(task)), cfg_(cfg) {
  cfg_.validate();
}

JudgeScore SyntheticJudge::score(const TokenSequence& seq, uint64_t noise_seed) const {
  Rng rng(noise_seed);
  const double z_sem = standard_normal(rng);
  const double z_ac = standard_normal(rng);
  return {semantic_score(seq, *task_, cfg_, z_sem), acoustic_score(seq, *task_, cfg_, z_ac)};
}

GroupScores score_rollout_group(const std::vector<TokenSequence>& members,
                                const RewardSource& source, uint64_t stream) {
  GroupScores out;
  for (size_t i = 0; i < members.size(); ++i) {
    const JudgeScore s = source.score(members[i], derive_seed(source.seed(), {stream, i}));
    out.scores.push_back(s);
    out.rewards.push_back(source.reward(s));
  }
  return out;
}

std::pair<size_t, size_t> select_pair_indices(const std::vector<JudgeScore>& scores,
                                              const JudgeConfig& cfg) {
  if (scores.size() < 2) throw std::invalid_argument("preference pair needs >= 2 candidates");
  auto key = [&](size_t i) {
    return std::make_tuple(utility(scores[i], cfg), scores[i].semantic, scores[i].acoustic,
                           -static_cast<long>(i));
  };
  size_t best = 0;
  size_t worst = 0;
  for (size_t i = 1; i < scores.size(); ++i) {
    if (key(i) > key(best)) best = i;
    if (key(i) < key(worst)) worst = i;
  }
  return {best, worst};
}

std::optional<PreferencePair> build_preference_pair(
    const std::vector<std::pair<TokenSequence, JudgeScore>>& candidates, const JudgeConfig& cfg) {
  std::vector<JudgeScore> scores;
  scores.reserve(candidates.size());
  for (const auto& c : candidates) scores.push_back(c.second);
  const auto [best, worst] = select_pair_indices(scores, cfg);
  const double gap = utility(scores[best], cfg) - utility(scores[worst], cfg);
  if (gap < cfg.margin_delta) return std::nullopt;
  PreferencePair pair;
  pair.prompt = candidates[best].first.prompt;
  pair.chosen = candidates[best].first;
  pair.rejected = candidates[worst].first;
  pair.chosen_score = scores[best];
  pair.rejected_score = scores[worst];
  pair.utility_gap = gap;
  return pair;
}

}  // namespace omnihybrid
