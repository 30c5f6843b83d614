// Copyright 2026 The omnihybrid Authors
// SPDX-License-Identifier: Apache-2.0

#include "omnihybrid/sampling.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "omnihybrid/rng.h"

namespace omnihybrid {

std::vector<double> sampling_distribution(std::span<const double> logits,
                                          const std::vector<bool>& allowed,
                                          double temperature, double top_p) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("top_p must be in (0, 1]");
  if (!allowed.empty() && allowed.size() != logits.size()) {
    throw std::invalid_argument("allowed mask size mismatch");
  }
  const size_t n = logits.size();
  auto ok = [&](size_t k) { return allowed.empty() || allowed[k]; };

  double m = -std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < n; ++k) {
    if (ok(k)) m = std::max(m, logits[k] / temperature);
  }
  if (!std::isfinite(m)) throw std::invalid_argument("no admissible token");
  std::vector<double> p(n, 0.0);
  double s = 0.0;
  for (size_t k = 0; k < n; ++k) {
    if (!ok(k)) continue;
    p[k] = std::exp(logits[k] / temperature - m);
    s += p[k];
  }
  for (double& x : p) x /= s;
  if (top_p >= 1.0) return p;

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return p[a] > p[b]; });
  double mass = 0.0;
  size_t keep = 0;
  while (keep < n && p[order[keep]] > 0.0) {
    mass += p[order[keep]];
    ++keep;
    if (mass >= top_p) break;
  }
  std::vector<double> out(n, 0.0);
  for (size_t i = 0; i < keep; ++i) out[order[i]] = p[order[i]] / mass;
  return out;
}

std::vector<bool> slot_allowed(const ModelConfig& config, size_t position) {
  const Vocabulary& vocab = config.vocab;
  std::vector<bool> allowed(static_cast<size_t>(vocab.size()), false);
  if (config.slot_modality(position) == Modality::kText) {
    for (int k = 0; k < vocab.text_size; ++k) allowed[static_cast<size_t>(vocab.text_token(k))] = true;
    allowed[static_cast<size_t>(vocab.eos())] = true;
  } else {
    for (int k = 0; k < vocab.speech_size; ++k) {
      allowed[static_cast<size_t>(vocab.speech_token(k))] = true;
    }
  }
  return allowed;
}

namespace {

template <typename Pick>
TokenSequence decode(const PolicyParams& params, const std::vector<TokenId>& prompt, Pick pick) {
  const ModelConfig& cfg = params.config();
  TokenSequence seq;
  seq.prompt = prompt;
  for (TokenId t : prompt) {
    if (!cfg.vocab.contains(t)) {
      throw std::domain_error("prompt token " + std::to_string(t) + " out of vocabulary");
    }
  }
  const auto max_len = static_cast<size_t>(cfg.max_response_length);
  while (seq.response.size() < max_len) {
    const size_t pos = seq.response.size();
    const auto ctx = context_window(cfg, seq, pos);
    const auto logits = next_token_logits(params, ctx);
    const auto allowed = slot_allowed(cfg, pos);
    const TokenId tok = pick(logits, allowed);
    seq.response.push_back(tok);
    seq.modality.push_back(cfg.slot_modality(pos));
    if (tok == cfg.vocab.eos()) return seq;
  }
  seq.truncated = true;
  return seq;
}

}  // namespace

TokenSequence sample_one(const PolicyParams& params, const std::vector<TokenId>& prompt,
                         double temperature, double top_p, uint64_t seed, uint64_t member) {
  Rng rng(derive_seed(seed, {member}));
  return decode(params, prompt, [&](const std::vector<double>& logits,
                                    const std::vector<bool>& allowed) {
    const auto p = sampling_distribution(logits, allowed, temperature, top_p);
    const double u = uniform01(rng);
    double c = 0.0;
    TokenId last = 0;
    for (size_t k = 0; k < p.size(); ++k) {
      if (p[k] <= 0.0) continue;
      c += p[k];
      last = static_cast<TokenId>(k);
      if (u < c) return last;
    }
    return last;
  });
}

std::vector<TokenSequence> sample_group(const PolicyParams& params,
                                        const std::vector<TokenId>& prompt, int group_size,
                                        double temperature, double top_p, uint64_t seed) {
  if (group_size < 1) throw std::invalid_argument("group size must be >= 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("top_p must be in (0, 1]");
  std::vector<TokenSequence> out;
  out.reserve(static_cast<size_t>(group_size));
  for (int i = 0; i < group_size; ++i) {
    out.push_back(sample_one(params, prompt, temperature, top_p, seed, static_cast<uint64_t>(i)));
  }
  return out;
}

TokenSequence greedy_decode(const PolicyParams& params, const std::vector<TokenId>& prompt) {
  return decode(params, prompt, [](const std::vector<double>& logits,
                                   const std::vector<bool>& allowed) {
    TokenId best = -1;
    for (size_t k = 0; k < logits.size(); ++k) {
      if (!allowed[k]) continue;
      if (best < 0 || logits[k] > logits[static_cast<size_t>(best)]) best = static_cast<TokenId>(k);
    }
    return best;
  });
}

}  // namespace omnihybrid
