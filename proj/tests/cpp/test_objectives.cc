// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "oracles.h"
#include "omnihybrid/objectives.h"

namespace omnihybrid {
namespace {

using oracle::compare_grads;
using oracle::finite_difference;

constexpr int kInstances = 20;

TokenSequence make_seq(const std::vector<TokenId>& prompt, const std::vector<TokenId>& resp,
                       const Vocabulary& v) {
  TokenSequence s;
  s.prompt = prompt;
  s.response = resp;
  for (TokenId t : resp) s.modality.push_back(v.is_speech(t) ? Modality::kSpeech : Modality::kText);
  return s;
}

// ---- SFT ----

TEST(Sft, UniformClosedForm) {
  ModelConfig m;
  m.vocab.text_size = 6;
  m.vocab.speech_size = 8;
  const PolicyParams p = PolicyParams::initialize(m);
  EXPECT_NEAR(sft_loss(p, make_seq({0}, {1, 7}, m.vocab)), 2.0 * std::log(16.0), 1e-12);
}

TEST(Sft, EmptyDemoWarns) {
  const PolicyParams p = PolicyParams::initialize(ModelConfig{});
  Diagnostics diag;
  EXPECT_EQ(sft_loss(p, make_seq({0}, {}, p.vocab()), &diag), 0.0);
  EXPECT_EQ(diag.warnings.size(), 1u);
}

TEST(Sft, MatchesOracleAndFiniteDifferences) {
  const ModelConfig m = oracle::tiny_model();
  Rng rng(1);
  for (int i = 0; i < kInstances; ++i) {
    const PolicyParams p = oracle::random_params(m, 200 + static_cast<uint64_t>(i));
    const TokenSequence s = oracle::random_sequence(m, rng);
    EXPECT_NEAR(sft_loss(p, s), oracle::oracle_sft(p, s), 1e-10);
    const auto g = grad_of_scalar(p, objective::Sft{s});
    const auto fd = finite_difference(p, [&](const PolicyParams& q) { return oracle::oracle_sft(q, s); });
    const auto c = compare_grads(g, fd);
    EXPECT_TRUE(c.ok) << "instance " << i << " worst " << c.worst_rel;
  }
}

TEST(Sft, DescentDirectionLowersLoss) {
  const ModelConfig m = oracle::tiny_model();
  Rng rng(2);
  const PolicyParams p = oracle::random_params(m, 3);
  const TokenSequence s = oracle::random_sequence(m, rng);
  const auto g = grad_of_scalar(p, objective::Sft{s});
  PolicyParams q = p;
  for (size_t i = 0; i < q.size(); ++i) q.values()[i] -= 1e-3 * g[i];
  EXPECT_LT(sft_loss(q, s), sft_loss(p, s));
}

// ---- masked score ----

TEST(MaskedScore, Identities) {
  const ModelConfig m = oracle::tiny_model();
  Rng rng(5);
  const PolicyParams p = oracle::random_params(m, 6);
  const TokenSequence s = oracle::random_sequence(m, rng);
  const auto part = logprob_partitioned(p, s);
  EXPECT_EQ(masked_score(p, s, {}), 0.0);
  EXPECT_EQ(masked_score(p, s, mask_positions(s, MaskRule::kAll)), -sft_loss(p, s));
  EXPECT_EQ(masked_score(p, s, mask_positions(s, MaskRule::kTextOnly)), part.text);
  EXPECT_THROW(masked_score(p, s, {s.length()}), std::domain_error);
}

// ---- advantages ----

TEST(Advantages, Examples) {
  for (double a : group_advantages({3.0, 3.0, 3.0}, 1e-6)) EXPECT_EQ(a, 0.0);
  const auto a = group_advantages({1.0, 5.0}, 1e-6);
  EXPECT_NEAR(a[0], -1.0, 1e-6);
  EXPECT_NEAR(a[1], 1.0, 1e-6);
  EXPECT_THROW(group_advantages({}, 1e-6), std::invalid_argument);
}

TEST(Advantages, Centered) {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> r(1 + rng() % 8);
    for (double& x : r) x = 1.0 + 4.0 * uniform01(rng);
    const auto a = group_advantages(r, 1e-6);
    EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size()), 0.0, 1e-12);
  }
}

// ---- GRPO ----

class GrpoOracle : public ::testing::TestWithParam<MaskRule> {};

TEST_P(GrpoOracle, MatchesOracleAndFiniteDifferences) {
  const MaskRule rule = GetParam();
  const bool text_only = rule == MaskRule::kTextOnly;
  const ModelConfig m = oracle::tiny_model();
  for (int i = 0; i < kInstances; ++i) {
    const auto in = oracle::random_grpo(m, 300 + 7 * static_cast<uint64_t>(i));
    const auto group = in.group();
    const ReferenceSnapshot ref(in.ref);
    auto f = [&](const PolicyParams& q) {
      return oracle::oracle_grpo(q, in.old_params, in.ref, in.members, in.rewards, in.cfg, text_only);
    };
    EXPECT_NEAR(grpo_loss(in.params, group, ref, in.cfg, rule), f(in.params), 1e-10);
    const auto g = grad_of_scalar(in.params, objective::Grpo{group, ref, in.cfg, rule});
    const auto c = compare_grads(g, finite_difference(in.params, f));
    EXPECT_TRUE(c.ok) << "instance " << i << " worst " << c.worst_rel;
  }
}

INSTANTIATE_TEST_SUITE_P(Rules, GrpoOracle, ::testing::Values(MaskRule::kAll, MaskRule::kTextOnly),
                         [](const auto& info) { return std::string(mask_rule_name(info.param)); });

TEST(Grpo, ZeroAtReferenceWithEqualRewards) {
  const ModelConfig m = oracle::tiny_model();
  auto in = oracle::random_grpo(m, 9);
  in.old_params = in.params;
  in.rewards.assign(in.rewards.size(), 3.0);
  const auto b = grpo_breakdown(in.params, in.group(), ReferenceSnapshot(in.params), in.cfg,
                                MaskRule::kAll);
  EXPECT_EQ(b.surrogate, 0.0);
  EXPECT_EQ(b.kl, 0.0);
}

TEST(Grpo, EqualRewardsGiveNoPolicyGradient) {
  const ModelConfig m = oracle::tiny_model();
  auto in = oracle::random_grpo(m, 10);
  in.rewards.assign(in.rewards.size(), 2.5);
  const auto grads = grpo_logit_grads(in.params, in.group(), ReferenceSnapshot(in.ref), in.cfg,
                                      MaskRule::kAll, GrpoPart::kSurrogate);
  for (const auto& g : grads) {
    for (double x : g.dlogits) EXPECT_EQ(x, 0.0);
  }
}

TEST(Grpo, TextOnlySurrogateLeavesSpeechLogitsUntouched) {
  const ModelConfig m = oracle::tiny_model();
  for (int i = 0; i < 20; ++i) {
    const auto in = oracle::random_grpo(m, 500 + static_cast<uint64_t>(i));
    const RolloutGroup group = in.group();
    const auto grads = grpo_logit_grads(in.params, group, ReferenceSnapshot(in.ref), in.cfg,
                                        MaskRule::kTextOnly, GrpoPart::kSurrogate);
    for (const auto& g : grads) {
      const size_t V = static_cast<size_t>(m.vocab.size());
      for (size_t t : g.sequence->speech_positions()) {
        for (size_t k = 0; k < V; ++k) EXPECT_EQ(g.dlogits[t * V + k], 0.0);
      }
    }
  }
}

TEST(Grpo, KlOnSpeechCanBeDisabledUnderTextOnly) {
  const ModelConfig m = oracle::tiny_model();
  auto in = oracle::random_grpo(m, 12);
  in.cfg.kl_on_speech_when_text_only = false;
  const RolloutGroup group = in.group();
  const auto grads = grpo_logit_grads(in.params, group, ReferenceSnapshot(in.ref), in.cfg,
                                      MaskRule::kTextOnly);
  const size_t V = static_cast<size_t>(m.vocab.size());
  for (const auto& g : grads) {
    for (size_t t : g.sequence->speech_positions()) {
      for (size_t k = 0; k < V; ++k) EXPECT_EQ(g.dlogits[t * V + k], 0.0);
    }
  }
  EXPECT_NEAR(grpo_loss(in.params, in.group(), ReferenceSnapshot(in.ref), in.cfg, MaskRule::kTextOnly),
              oracle::oracle_grpo(in.params, in.old_params, in.ref, in.members, in.rewards, in.cfg, true),
              1e-10);
}

TEST(Grpo, ClipIsInactiveInsideTrustRegion) {
  const ModelConfig m = oracle::tiny_model();
  auto in = oracle::random_grpo(m, 13);
  in.old_params = oracle::perturbed(in.params, 99, 1e-4);
  const auto group = in.group();
  const ReferenceSnapshot ref(in.ref);
  const double clipped = grpo_loss(in.params, group, ref, in.cfg, MaskRule::kAll);
  GRPOConfig wide = in.cfg;
  wide.epsilon_clip = 1e6;
  EXPECT_EQ(clipped, grpo_loss(in.params, group, ref, wide, MaskRule::kAll));
}

TEST(Grpo, ZeroProbabilityBehaviorTokenIsAnError) {
  const ModelConfig m = oracle::tiny_model();
  auto in = oracle::random_grpo(m, 14);
  const TokenId tok = in.members[0].response[0];
  // An infinite negative output bias gives the sampled token probability 0.
  const auto& out = in.old_params.layer("output");
  const size_t H = out.shape[1] - 1;
  in.old_params.values()[out.offset + static_cast<size_t>(tok) * (H + 1) + H] = -std::numeric_limits<double>::infinity();
  EXPECT_THROW(grpo_loss(in.params, in.group(), ReferenceSnapshot(in.ref), in.cfg, MaskRule::kAll),
               std::domain_error);
}

// ---- DPO ----

TEST(Dpo, LossExamples) {
  DPOConfig cfg;
  EXPECT_NEAR(dpo_loss(0.0, cfg), std::log(2.0), 1e-15);
  EXPECT_LT(dpo_loss(1e4, cfg), 1e-12);
  cfg.gamma = 2.0;
  EXPECT_NEAR(dpo_loss(1.0, cfg), 0.126928011042973, 1e-12);
  EXPECT_GT(dpo_loss(-1e3, cfg), 0.0);
  EXPECT_TRUE(std::isfinite(dpo_loss(-1e6, cfg)));
  EXPECT_GT(dpo_loss(0.5, cfg), dpo_loss(0.6, cfg));
}

TEST(Dpo, DeltaSymmetries) {
  const ModelConfig m = oracle::tiny_model();
  const auto in = oracle::random_dpo(m, 21);
  const ReferenceSnapshot ref(in.ref);
  const PreferenceTriple pair{in.chosen, in.rejected};
  const PreferenceTriple swapped{in.rejected, in.chosen};
  const PreferenceTriple same{in.chosen, in.chosen};
  for (MaskRule r : {MaskRule::kAll, MaskRule::kTextOnly}) {
    EXPECT_EQ(dpo_delta(in.params, ref, pair, r), -dpo_delta(in.params, ref, swapped, r));
    EXPECT_EQ(dpo_delta(in.params, ref, same, r), 0.0);
    EXPECT_EQ(dpo_delta(in.params, ReferenceSnapshot(in.params), pair, r), 0.0);
  }
}

class DpoOracle : public ::testing::TestWithParam<MaskRule> {};

TEST_P(DpoOracle, MatchesOracleAndFiniteDifferences) {
  const MaskRule rule = GetParam();
  const bool text_only = rule == MaskRule::kTextOnly;
  const ModelConfig m = oracle::tiny_model();
  for (int i = 0; i < kInstances; ++i) {
    const auto in = oracle::random_dpo(m, 700 + 5 * static_cast<uint64_t>(i));
    DPOConfig cfg;
    cfg.gamma = in.gamma;
    const objective::Dpo obj{{in.chosen, in.rejected}, ReferenceSnapshot(in.ref), cfg, rule};
    auto f = [&](const PolicyParams& q) {
      return oracle::oracle_dpo(q, in.ref, in.chosen, in.rejected, in.gamma, text_only);
    };
    EXPECT_NEAR(evaluate_objective(in.params, obj), f(in.params), 1e-10);
    const auto c = compare_grads(grad_of_scalar(in.params, obj), finite_difference(in.params, f));
    EXPECT_TRUE(c.ok) << "instance " << i << " worst " << c.worst_rel;
  }
}

INSTANTIATE_TEST_SUITE_P(Rules, DpoOracle, ::testing::Values(MaskRule::kAll, MaskRule::kTextOnly),
                         [](const auto& info) { return std::string(mask_rule_name(info.param)); });

TEST(Dpo, GradientFavoursChosen) {
  const ModelConfig m = oracle::tiny_model();
  for (int i = 0; i < 20; ++i) {
    auto in = oracle::random_dpo(m, 900 + static_cast<uint64_t>(i));
    if (in.chosen.response == in.rejected.response) continue;
    DPOConfig cfg;
    cfg.gamma = in.gamma;
    const objective::Dpo obj{{in.chosen, in.rejected}, ReferenceSnapshot(in.ref), cfg, MaskRule::kAll};
    const auto g = grad_of_scalar(in.params, obj);
    // The directional derivative of the margin along -grad is -<grad_margin, grad>.
    const auto gp = grad_of_scalar(in.params, objective::MaskedScore{in.chosen, mask_positions(in.chosen, MaskRule::kAll)});
    const auto gn = grad_of_scalar(in.params, objective::MaskedScore{in.rejected, mask_positions(in.rejected, MaskRule::kAll)});
    double dir = 0.0;
    for (size_t k = 0; k < g.size(); ++k) dir -= (gp[k] - gn[k]) * g[k];
    EXPECT_GT(dir, 0.0) << "instance " << i;
  }
}

// ---- hybrid ----

TEST(Hybrid, ReducesToSftAtZero) {
  const ModelConfig m = oracle::tiny_model();
  const auto in = oracle::random_grpo(m, 31);
  const TokenSequence demo = in.members[0];
  EXPECT_EQ(hybrid_loss(in.params, demo, in.group(), ReferenceSnapshot(in.ref), in.cfg, 0.0),
            sft_loss(in.params, demo));
  EXPECT_THROW(hybrid_loss(in.params, demo, in.group(), ReferenceSnapshot(in.ref), in.cfg, 1.5),
               std::invalid_argument);
}

TEST(Hybrid, IsConvexMixAtLambdaMax) {
  const ModelConfig m = oracle::tiny_model();
  const auto in = oracle::random_grpo(m, 32);
  const TokenSequence demo = in.members[1];
  const ReferenceSnapshot ref(in.ref);
  const double want = 0.2 * sft_loss(in.params, demo) +
                      0.8 * grpo_loss(in.params, in.group(), ref, in.cfg, MaskRule::kTextOnly);
  EXPECT_NEAR(hybrid_loss(in.params, demo, in.group(), ref, in.cfg, 0.8), want, 1e-12);
}

TEST(Hybrid, GradientIsLinearInParts) {
  const ModelConfig m = oracle::tiny_model();
  for (int i = 0; i < 10; ++i) {
    const auto in = oracle::random_grpo(m, 40 + static_cast<uint64_t>(i));
    const TokenSequence demo = in.members[0];
    const ReferenceSnapshot ref(in.ref);
    const double lam = 0.1 * i;
    const auto gh = grad_of_scalar(in.params, objective::Hybrid{demo, in.group(), ref, in.cfg, lam});
    const auto gs = grad_of_scalar(in.params, objective::Sft{demo});
    const auto gg = grad_of_scalar(in.params, objective::Grpo{in.group(), ref, in.cfg, MaskRule::kTextOnly});
    for (size_t k = 0; k < gh.size(); ++k) {
      EXPECT_NEAR(gh[k], (1.0 - lam) * gs[k] + lam * gg[k], 1e-10 * (1.0 + std::abs(gh[k])));
    }
  }
}

TEST(Hybrid, MatchesFiniteDifferences) {
  const ModelConfig m = oracle::tiny_model();
  for (int i = 0; i < kInstances; ++i) {
    const auto in = oracle::random_grpo(m, 1100 + 3 * static_cast<uint64_t>(i));
    Rng rng(static_cast<uint64_t>(i));
    TokenSequence demo = oracle::random_sequence(m, rng, 6);
    const double lam = uniform01(rng);
    auto f = [&](const PolicyParams& q) {
      return (1.0 - lam) * oracle::oracle_sft(q, demo) +
             lam * oracle::oracle_grpo(q, in.old_params, in.ref, in.members, in.rewards, in.cfg, true);
    };
    const objective::Hybrid obj{demo, in.group(), ReferenceSnapshot(in.ref), in.cfg, lam};
    EXPECT_NEAR(evaluate_objective(in.params, obj), f(in.params), 1e-10);
    const auto c = compare_grads(grad_of_scalar(in.params, obj), finite_difference(in.params, f));
    EXPECT_TRUE(c.ok) << "instance " << i << " worst " << c.worst_rel;
  }
}

// ---- gradient split ----

TEST(Split, TextPlusSpeechEqualsTotal) {
  const ModelConfig m = oracle::tiny_model();
  for (int i = 0; i < 30; ++i) {
    const auto in = oracle::random_grpo(m, 1300 + static_cast<uint64_t>(i));
    const auto sg = split_grad_of_scalar(
        in.params, objective::Grpo{in.group(), ReferenceSnapshot(in.ref), in.cfg, MaskRule::kAll});
    double diff = 0.0, norm = 0.0;
    for (size_t k = 0; k < sg.total.size(); ++k) {
      const double d = sg.text[k] + sg.speech[k] - sg.total[k];
      diff += d * d;
      norm += sg.total[k] * sg.total[k];
    }
    EXPECT_LE(std::sqrt(diff), 1e-10 * std::sqrt(norm));
  }
}

TEST(Config, Validation) {
  GRPOConfig g;
  g.epsilon_clip = 0.0;
  EXPECT_THROW(g.validate(), std::invalid_argument);
  g = GRPOConfig{};
  g.beta_speech = -1.0;
  EXPECT_THROW(g.validate(), std::invalid_argument);
  DPOConfig d;
  d.gamma = 0.0;
  EXPECT_THROW(d.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace omnihybrid
