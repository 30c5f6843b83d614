// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

// Post-training objectives over the mixed-modality policy: teacher-forcing
// SFT, masked sequence scores, GRPO with a clipped ratio and per-modality
// KL anchor, DPO, and the SFT/GRPO hybrid.
//
// Every loss is a sum of per-position terms, so each one is computed as a
// set of logit-level gradients (one [T, V] block per sequence) that
// `backprop` turns into a parameter gradient. The logit-level form is also
// what the modality-locality checks inspect.

#pragma once

#include <string>
#include <variant>
#include <vector>

#include "omnihybrid/model.h"

namespace omnihybrid {

enum class MaskRule { kAll, kTextOnly };

const char* mask_rule_name(MaskRule rule);

struct GRPOConfig {
  double epsilon_clip = 0.2;
  double beta_text = 0.01;
  double beta_speech = 0.01;
  double advantage_epsilon = 1e-6;
  // Under kTextOnly the KL anchor stays on speech positions unless this is
  // turned off.
  bool kl_on_speech_when_text_only = true;

  void validate() const;
};

struct DPOConfig {
  double gamma = 0.1;

  void validate() const;
};

struct RolloutGroup {
  std::vector<TokenId> prompt;
  std::vector<TokenSequence> members;
  std::vector<double> rewards;
  ReferenceSnapshot behavior;  // pi_old

  void validate() const;
};

struct PreferenceTriple {
  TokenSequence chosen;
  TokenSequence rejected;
};

// Collects non-fatal conditions (e.g. an empty demonstration).
struct Diagnostics {
  std::vector<std::string> warnings;
};

struct LossWithGrad {
  double value = 0.0;
  std::vector<double> grad;
};

// Logit-level gradient for one sequence, [T, V] row-major. `sequence`
// points into the objective or group it was computed from.
struct SequenceLogitGrad {
  const TokenSequence* sequence = nullptr;
  std::vector<double> dlogits;
};

// -sum_t log pi(y*_t | x, y*_<t) over every response position.
double sft_loss(const PolicyParams& params, const TokenSequence& demo,
                Diagnostics* diag = nullptr);

// s_M = sum over mask of log pi(y_t | x, y_<t). Throws std::domain_error for
// mask indices outside the response.
double masked_score(const PolicyParams& params, const TokenSequence& seq,
                    const std::vector<size_t>& mask);

std::vector<size_t> mask_positions(const TokenSequence& seq, MaskRule rule);

// (R_i - mean) / (population std + eps).
std::vector<double> group_advantages(const std::vector<double>& rewards,
                                     double advantage_epsilon);

struct GrpoBreakdown {
  double surrogate = 0.0;  // -(1/G) sum_i sum_t min(rho A, clip(rho) A)
  double kl = 0.0;         // (1/G) sum_i mean_t beta_t KL_t
  double total() const { return surrogate + kl; }
};

GrpoBreakdown grpo_breakdown(const PolicyParams& params, const RolloutGroup& group,
                             const ReferenceSnapshot& ref, const GRPOConfig& cfg,
                             MaskRule rule);

double grpo_loss(const PolicyParams& params, const RolloutGroup& group,
                 const ReferenceSnapshot& ref, const GRPOConfig& cfg, MaskRule rule);

enum class GrpoPart { kSurrogate, kKl, kBoth };

// Per-member logit gradients of the GRPO loss (or one of its parts).
std::vector<SequenceLogitGrad> grpo_logit_grads(const PolicyParams& params,
                                                const RolloutGroup& group,
                                                const ReferenceSnapshot& ref,
                                                const GRPOConfig& cfg, MaskRule rule,
                                                GrpoPart part = GrpoPart::kBoth);

// Reference-corrected log-ratio gap with masked scores.
double dpo_delta(const PolicyParams& params, const ReferenceSnapshot& ref,
                 const PreferenceTriple& pair, MaskRule rule);

// -log sigmoid(gamma * delta), computed stably.
double dpo_loss(double delta, const DPOConfig& cfg);

struct HybridBreakdown {
  double sft = 0.0;
  double grpo = 0.0;
  double lambda = 0.0;
  double total() const { return (1.0 - lambda) * sft + lambda * grpo; }
};

// (1 - lambda) SFT(all tokens) + lambda GRPO(text-only surrogate).
HybridBreakdown hybrid_breakdown(const PolicyParams& params, const TokenSequence& demo,
                                 const RolloutGroup& group, const ReferenceSnapshot& ref,
                                 const GRPOConfig& cfg, double lambda);
double hybrid_loss(const PolicyParams& params, const TokenSequence& demo,
                   const RolloutGroup& group, const ReferenceSnapshot& ref,
                   const GRPOConfig& cfg, double lambda);

// Differentiable scalar objectives understood by `grad_of_scalar`.
namespace objective {
struct Constant {
  double value = 0.0;
};
struct Sft {
  TokenSequence demo;
};
struct MaskedScore {
  TokenSequence seq;
  std::vector<size_t> mask;
};
struct Grpo {
  RolloutGroup group;
  ReferenceSnapshot ref;
  GRPOConfig cfg;
  MaskRule rule = MaskRule::kAll;
};
struct Dpo {
  PreferenceTriple pair;
  ReferenceSnapshot ref;
  DPOConfig cfg;
  MaskRule rule = MaskRule::kAll;
};
struct Hybrid {
  TokenSequence demo;
  RolloutGroup group;
  ReferenceSnapshot ref;
  GRPOConfig cfg;
  double lambda = 0.0;
};
}  // namespace objective

using Objective = std::variant<objective::Constant, objective::Sft, objective::MaskedScore,
                               objective::Grpo, objective::Dpo, objective::Hybrid>;

double evaluate_objective(const PolicyParams& params, const Objective& obj);

// Logit-level gradients of an objective, one entry per sequence term. The
// same sequence may appear more than once (e.g. chosen/rejected).
std::vector<SequenceLogitGrad> objective_logit_grads(const PolicyParams& params,
                                                     const Objective& obj);

// Exact analytic gradient aligned with params.values().
std::vector<double> grad_of_scalar(const PolicyParams& params, const Objective& obj);

// Value plus gradient, split into the parts flowing through text positions
// and speech positions (g = g_text + g_speech).
struct SplitGrad {
  double value = 0.0;
  std::vector<double> total;
  std::vector<double> text;
  std::vector<double> speech;
};
SplitGrad split_grad_of_scalar(const PolicyParams& params, const Objective& obj);

}  // namespace omnihybrid
