// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

#include "omnihybrid/objectives.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace omnihybrid {

const char* mask_rule_name(MaskRule rule) {
  return rule == MaskRule::kAll ? "all" : "text_only";
}

void GRPOConfig::validate() const {
  if (!(epsilon_clip > 0.0)) throw std::invalid_argument("objectives.epsilon_clip must be > 0");
  if (!(beta_text >= 0.0)) throw std::invalid_argument("objectives.beta_text must be >= 0");
  if (!(beta_speech >= 0.0)) throw std::invalid_argument("objectives.beta_speech must be >= 0");
  if (!(advantage_epsilon > 0.0)) {
    throw std::invalid_argument("objectives.advantage_epsilon must be > 0");
  }
}

void DPOConfig::validate() const {
  if (!(gamma > 0.0)) throw std::invalid_argument("objectives.dpo_gamma must be > 0");
}

void RolloutGroup::validate() const {
  if (members.empty()) throw std::invalid_argument("rollout group is empty");
  if (members.size() != rewards.size()) {
    throw std::invalid_argument("rollout group: members and rewards differ in length");
  }
  if (behavior.empty()) throw std::invalid_argument("rollout group: missing behavior snapshot");
}

namespace {

double logprob_at(const SequenceForward& f, const TokenSequence& seq, size_t t) {
  return f.logprobs[t * f.vocab + static_cast<size_t>(seq.response[t])];
}

// dlogits[t] += scale * (onehot(y_t) - p_t)
void add_score_grad(const SequenceForward& f, const TokenSequence& seq, size_t t, double scale,
                    std::vector<double>& dlogits) {
  double* row = dlogits.data() + t * f.vocab;
  const auto lp = f.logprob_row(t);
  for (size_t k = 0; k < f.vocab; ++k) row[k] -= scale * std::exp(lp[k]);
  row[static_cast<size_t>(seq.response[t])] += scale;
}

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_mask(const TokenSequence& seq, const std::vector<size_t>& mask) {
  for (size_t t : mask) {
    if (t >= seq.length()) {
      throw std::domain_error("mask index " + std::to_string(t) + " outside response of length " +
                              std::to_string(seq.length()));
    }
  }
}

std::vector<double> zero_dlogits(const SequenceForward& f) {
  return std::vector<double>(f.positions * f.vocab, 0.0);
}

// Shared kernel for the GRPO value and its logit gradients.
GrpoBreakdown grpo_eval(const PolicyParams& params, const RolloutGroup& group,
                        const ReferenceSnapshot& ref, const GRPOConfig& cfg, MaskRule rule,
                        GrpoPart part, std::vector<SequenceLogitGrad>* grads) {
  group.validate();
  cfg.validate();
  if (ref.empty()) throw std::invalid_argument("grpo: missing reference snapshot");
  const auto adv = group_advantages(group.rewards, cfg.advantage_epsilon);
  const double inv_g = 1.0 / static_cast<double>(group.members.size());
  const bool want_surrogate = part != GrpoPart::kKl;
  const bool want_kl = part != GrpoPart::kSurrogate;
  GrpoBreakdown out;

  for (size_t i = 0; i < group.members.size(); ++i) {
    const TokenSequence& y = group.members[i];
    const SequenceForward f = forward(params, y);
    const SequenceForward f_old = forward(group.behavior.params(), y);
    const SequenceForward f_ref = forward(ref.params(), y);
    std::vector<double> dz;
    if (grads) dz = zero_dlogits(f);
    const double a = adv[i];

    for (size_t t : mask_positions(y, rule)) {
      const double lp_old = logprob_at(f_old, y, t);
      if (!(lp_old > -std::numeric_limits<double>::infinity())) {
        throw std::domain_error("grpo: behavior policy assigns zero probability at member " +
                                std::to_string(i) + " position " + std::to_string(t));
      }
      const double rho = std::exp(logprob_at(f, y, t) - lp_old);
      const double unclipped = rho * a;
      const double clipped =
          std::clamp(rho, 1.0 - cfg.epsilon_clip, 1.0 + cfg.epsilon_clip) * a;
      out.surrogate -= inv_g * std::min(unclipped, clipped);
      if (grads && want_surrogate && unclipped <= clipped) {
        add_score_grad(f, y, t, -inv_g * a * rho, dz);
      }
    }

    const size_t len = y.length();
    for (size_t t = 0; t < len; ++t) {
      const bool speech = y.modality[t] == Modality::kSpeech;
      if (speech && rule == MaskRule::kTextOnly && !cfg.kl_on_speech_when_text_only) continue;
      const double beta = speech ? cfg.beta_speech : cfg.beta_text;
      if (beta == 0.0) continue;
      const auto lp = f.logprob_row(t);
      const auto lq = f_ref.logprob_row(t);
      double kl = 0.0;
      for (size_t k = 0; k < f.vocab; ++k) kl += std::exp(lp[k]) * (lp[k] - lq[k]);
      const double w = beta * inv_g / static_cast<double>(len);
      out.kl += w * kl;
      if (grads && want_kl) {
        double* row = dz.data() + t * f.vocab;
        for (size_t k = 0; k < f.vocab; ++k) row[k] += w * std::exp(lp[k]) * (lp[k] - lq[k] - kl);
      }
    }
    if (grads) grads->push_back({&y, std::move(dz)});
  }
  return out;
}

double dpo_eval(const PolicyParams& params, const ReferenceSnapshot& ref,
                const PreferenceTriple& pair, const DPOConfig& cfg, MaskRule rule,
                std::vector<SequenceLogitGrad>* grads) {
  cfg.validate();
  const SequenceForward fp = forward(params, pair.chosen);
  const SequenceForward fn = forward(params, pair.rejected);
  const double delta = dpo_delta(params, ref, pair, rule);
  const double loss = dpo_loss(delta, cfg);
  if (grads) {
    const double dl_ddelta = -cfg.gamma * sigmoid(-cfg.gamma * delta);
    std::vector<double> dzp = zero_dlogits(fp);
    std::vector<double> dzn = zero_dlogits(fn);
    for (size_t t : mask_positions(pair.chosen, rule)) add_score_grad(fp, pair.chosen, t, dl_ddelta, dzp);
    for (size_t t : mask_positions(pair.rejected, rule)) {
      add_score_grad(fn, pair.rejected, t, -dl_ddelta, dzn);
    }
    grads->push_back({&pair.chosen, std::move(dzp)});
    grads->push_back({&pair.rejected, std::move(dzn)});
  }
  return loss;
}

void scale_grads(std::vector<SequenceLogitGrad>& grads, size_t from, double s) {
  for (size_t i = from; i < grads.size(); ++i) {
    for (double& x : grads[i].dlogits) x *= s;
  }
}

}  // namespace

std::vector<size_t> mask_positions(const TokenSequence& seq, MaskRule rule) {
  if (rule == MaskRule::kTextOnly) return seq.text_positions();
  std::vector<size_t> all(seq.length());
  for (size_t t = 0; t < all.size(); ++t) all[t] = t;
  return all;
}

double sft_loss(const PolicyParams& params, const TokenSequence& demo, Diagnostics* diag) {
  if (demo.response.empty()) {
    if (diag) diag->warnings.push_back("sft_loss: empty demonstration response");
    demo.validate(params.vocab());
    return 0.0;
  }
  double s = 0.0;
  for (double lp : token_logprobs(params, demo)) s -= lp;
  return s;
}

double masked_score(const PolicyParams& params, const TokenSequence& seq,
                    const std::vector<size_t>& mask) {
  check_mask(seq, mask);
  const auto lp = token_logprobs(params, seq);
  double s = 0.0;
  for (size_t t : mask) s += lp[t];
  return s;
}

std::vector<double> group_advantages(const std::vector<double>& rewards,
                                     double advantage_epsilon) {
  if (rewards.empty()) throw std::invalid_argument("group_advantages: empty reward list");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= n;
  const double denom = std::sqrt(var) + advantage_epsilon;
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back((r - mean) / denom);
  return out;
}

GrpoBreakdown grpo_breakdown(const PolicyParams& params, const RolloutGroup& group,
                             const ReferenceSnapshot& ref, const GRPOConfig& cfg,
                             MaskRule rule) {
  return grpo_eval(params, group, ref, cfg, rule, GrpoPart::kBoth, nullptr);
}

double grpo_loss(const PolicyParams& params, const RolloutGroup& group,
                 const ReferenceSnapshot& ref, const GRPOConfig& cfg, MaskRule rule) {
  return grpo_breakdown(params, group, ref, cfg, rule).total();
}

std::vector<SequenceLogitGrad> grpo_logit_grads(const PolicyParams& params,
                                                const RolloutGroup& group,
                                                const ReferenceSnapshot& ref,
                                                const GRPOConfig& cfg, MaskRule rule,
                                                GrpoPart part) {
  std::vector<SequenceLogitGrad> out;
  grpo_eval(params, group, ref, cfg, rule, part, &out);
  return out;
}

double dpo_delta(const PolicyParams& params, const ReferenceSnapshot& ref,
                 const PreferenceTriple& pair, MaskRule rule) {
  if (ref.empty()) throw std::invalid_argument("dpo: missing reference snapshot");
  if (pair.chosen.prompt != pair.rejected.prompt) {
    throw std::invalid_argument("dpo: chosen and rejected responses have different prompts");
  }
  const auto mp = mask_positions(pair.chosen, rule);
  const auto mn = mask_positions(pair.rejected, rule);
  const double policy = masked_score(params, pair.chosen, mp) - masked_score(params, pair.rejected, mn);
  const double reference =
      masked_score(ref.params(), pair.chosen, mp) - masked_score(ref.params(), pair.rejected, mn);
  return policy - reference;
}

double dpo_loss(double delta, const DPOConfig& cfg) {
  cfg.validate();
  return softplus(-cfg.gamma * delta);
}

HybridBreakdown hybrid_breakdown(const PolicyParams& params, const TokenSequence& demo,
                                 const RolloutGroup& group, const ReferenceSnapshot& ref,
                                 const GRPOConfig& cfg, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("hybrid: lambda must be in [0, 1]");
  HybridBreakdown out;
  out.lambda = lambda;
  out.sft = sft_loss(params, demo);
  out.grpo = grpo_loss(params, group, ref, cfg, MaskRule::kTextOnly);
  return out;
}

double hybrid_loss(const PolicyParams& params, const TokenSequence& demo,
                   const RolloutGroup& group, const ReferenceSnapshot& ref,
                   const GRPOConfig& cfg, double lambda) {
  return hybrid_breakdown(params, demo, group, ref, cfg, lambda).total();
}

double evaluate_objective(const PolicyParams& params, const Objective& obj) {
  return std::visit(
      [&](const auto& o) -> double {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, objective::Constant>) {
          return o.value;
        } else if constexpr (std::is_same_v<T, objective::Sft>) {
          return sft_loss(params, o.demo);
        } else if constexpr (std::is_same_v<T, objective::MaskedScore>) {
          return masked_score(params, o.seq, o.mask);
        } else if constexpr (std::is_same_v<T, objective::Grpo>) {
          return grpo_loss(params, o.group, o.ref, o.cfg, o.rule);
        } else if constexpr (std::is_same_v<T, objective::Dpo>) {
          return dpo_loss(dpo_delta(params, o.ref, o.pair, o.rule), o.cfg);
        } else {
          return hybrid_loss(params, o.demo, o.group, o.ref, o.cfg, o.lambda);
        }
      },
      obj);
}

std::vector<SequenceLogitGrad> objective_logit_grads(const PolicyParams& params,
                                                     const Objective& obj) {
  std::vector<SequenceLogitGrad> out;
  std::visit(
      [&](const auto& o) {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, objective::Constant>) {
          return;
        } else if constexpr (std::is_same_v<T, objective::Sft>) {
          const SequenceForward f = forward(params, o.demo);
          auto dz = zero_dlogits(f);
          for (size_t t = 0; t < f.positions; ++t) add_score_grad(f, o.demo, t, -1.0, dz);
          out.push_back({&o.demo, std::move(dz)});
        } else if constexpr (std::is_same_v<T, objective::MaskedScore>) {
          check_mask(o.seq, o.mask);
          const SequenceForward f = forward(params, o.seq);
          auto dz = zero_dlogits(f);
          for (size_t t : o.mask) add_score_grad(f, o.seq, t, 1.0, dz);
          out.push_back({&o.seq, std::move(dz)});
        } else if constexpr (std::is_same_v<T, objective::Grpo>) {
          grpo_eval(params, o.group, o.ref, o.cfg, o.rule, GrpoPart::kBoth, &out);
        } else if constexpr (std::is_same_v<T, objective::Dpo>) {
          dpo_eval(params, o.ref, o.pair, o.cfg, o.rule, &out);
        } else {
          if (!(o.lambda >= 0.0 && o.lambda <= 1.0)) {
            throw std::invalid_argument("hybrid: lambda must be in [0, 1]");
          }
          const SequenceForward f = forward(params, o.demo);
          auto dz = zero_dlogits(f);
          for (size_t t = 0; t < f.positions; ++t) {
            add_score_grad(f, o.demo, t, -(1.0 - o.lambda), dz);
          }
          out.push_back({&o.demo, std::move(dz)});
          const size_t from = out.size();
          grpo_eval(params, o.group, o.ref, o.cfg, MaskRule::kTextOnly, GrpoPart::kBoth, &out);
          scale_grads(out, from, o.lambda);
        }
      },
      obj);
  return out;
}

std::vector<double> grad_of_scalar(const PolicyParams& params, const Objective& obj) {
  std::vector<double> g(params.size(), 0.0);
  for (const auto& term : objective_logit_grads(params, obj)) {
    backprop(params, forward(params, *term.sequence), term.dlogits, g);
  }
  return g;
}

SplitGrad split_grad_of_scalar(const PolicyParams& params, const Objective& obj) {
  SplitGrad out;
  out.value = evaluate_objective(params, obj);
  out.total.assign(params.size(), 0.0);
  out.text.assign(params.size(), 0.0);
  out.speech.assign(params.size(), 0.0);
  for (const auto& term : objective_logit_grads(params, obj)) {
    const TokenSequence& seq = *term.sequence;
    const SequenceForward f = forward(params, seq);
    std::vector<bool> text(seq.length()), speech(seq.length());
    for (size_t t = 0; t < seq.length(); ++t) {
      text[t] = seq.modality[t] == Modality::kText;
      speech[t] = !text[t];
    }
    backprop(params, f, term.dlogits, out.total);
    if (std::find(text.begin(), text.end(), true) != text.end()) {
      backprop(params, f, term.dlogits, out.text, text);
    }
    if (std::find(speech.begin(), speech.end(), true) != speech.end()) {
      backprop(params, f, term.dlogits, out.speech, speech);
    }
  }
  return out;
}

}  // namespace omnihybrid
