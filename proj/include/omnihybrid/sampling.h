// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "omnihybrid/model.h"

namespace omnihybrid {

// Effective next-token distribution: logits of disallowed tokens are
// dropped, the rest divided by `temperature`, soft-maxed, then truncated to
// the smallest prefix (by descending probability) whose mass reaches
// `top_p` and renormalized. An empty `allowed` admits every token.
std::vector<double> sampling_distribution(std::span<const double> logits,
                                          const std::vector<bool>& allowed,
                                          double temperature, double top_p);

// Tokens admissible at a response position under the generation schema:
// text slots admit text tokens and EOS, speech slots admit speech tokens.
std::vector<bool> slot_allowed(const ModelConfig& config, size_t position);

// One autoregressive sample. Identical inputs give identical output.
TokenSequence sample_one(const PolicyParams& params, const std::vector<TokenId>& prompt,
                         double temperature, double top_p, uint64_t seed, uint64_t member);

// G independent samples; member i uses stream (seed, i).
std::vector<TokenSequence> sample_group(const PolicyParams& params,
                                        const std::vector<TokenId>& prompt, int group_size,
                                        double temperature, double top_p, uint64_t seed);

// Argmax decoding under the slot schema; ties resolve to the lowest id.
TokenSequence greedy_decode(const PolicyParams& params, const std::vector<TokenId>& prompt);

}  // namespace omnihybrid
